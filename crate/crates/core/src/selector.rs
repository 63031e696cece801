//! Model-size selection: information criteria, the sequential sweep over `T`
//! with warm starts, and golden-section search over `T`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{GroupStructure, GroupedDesign};
use crate::exec::Execution;
use crate::linalg::dual_on_inactive;
use crate::linalg::{fit_least_squares, group_norms_squared};
use crate::splicing::{
    gsplicing_fit, initial_active_set, FitReport, GSplicingConfig, SpliceError,
    DEFAULT_MAX_ITERATIONS,
};

const GOLDEN_LOW: f64 = 0.618;
const GOLDEN_HIGH: f64 = 0.382;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("invalid selector configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fit at T = {size} failed: {source}")]
    Fit {
        size: usize,
        #[source]
        source: SpliceError,
    },
    #[error("golden-section search stalled on bracket [{lo}, {hi}]")]
    SearchStall { lo: usize, hi: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gic,
    Bic,
}

fn check_n(n: usize) -> Result<f64, SelectError> {
    let nf = n as f64;
    if nf <= std::f64::consts::E {
        return Err(SelectError::Domain(format!(
            "ln ln n requires n > e, got n = {n}"
        )));
    }
    Ok(nf)
}

/// `n ln L + #{A} ln J ln ln n`, with the loss clamped below at `loss_floor`.
pub fn gic_of(
    loss: f64,
    num_predictors: usize,
    n: usize,
    num_groups: usize,
    loss_floor: f64,
) -> Result<f64, SelectError> {
    let nf = check_n(n)?;
    Ok(nf * loss.max(loss_floor).ln()
        + num_predictors as f64 * (num_groups as f64).ln() * nf.ln().ln())
}

/// `n ln(‖y − Xβ‖²/n) + #{A} ln n`, where `‖y − Xβ‖²/n = 2L`.
pub fn bic_of(
    loss: f64,
    num_predictors: usize,
    n: usize,
    loss_floor: f64,
) -> Result<f64, SelectError> {
    let nf = check_n(n)?;
    Ok(nf * (2.0 * loss).max(loss_floor).ln() + num_predictors as f64 * nf.ln())
}

/// `1e-12 · (‖y‖² / 2n + 1)`.
pub fn default_loss_floor(design: &GroupedDesign) -> f64 {
    1e-12 * (design.y().norm_squared() / (2.0 * design.n() as f64) + 1.0)
}

/// Nearest integer, halves rounded away from zero.
pub fn nearest(x: f64) -> usize {
    x.round().max(0.0) as usize
}

/// `[n / (p_min ln p)]`, clamped to `1..=J`.
pub fn default_tmax(n: usize, p: usize, p_min: usize, num_groups: usize) -> usize {
    let raw = n as f64 / (p_min as f64 * (p as f64).ln());
    let t = if raw.is_finite() {
        nearest(raw)
    } else {
        num_groups
    };
    t.clamp(1, num_groups.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionRecord {
    pub size: usize,
    pub support: Vec<usize>,
    pub num_predictors: usize,
    pub loss: f64,
    pub gic: f64,
    pub bic: f64,
}

impl CriterionRecord {
    pub fn value(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Gic => self.gic,
            Criterion::Bic => self.bic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectorConfig {
    pub t_min: usize,
    pub t_max: usize,
    pub c_max: usize,
    pub criterion: Criterion,
    /// Defaults to [`default_loss_floor`] when unset.
    pub loss_floor: Option<f64>,
    /// Fixed `π_T` for every size; the size-dependent default when unset.
    pub threshold: Option<f64>,
    pub max_iterations: usize,
}

impl SelectorConfig {
    pub fn new(design: &GroupedDesign) -> Self {
        let s = design.structure();
        Self {
            t_min: 1,
            t_max: default_tmax(design.n(), design.p(), s.p_min(), s.num_groups()),
            c_max: crate::splicing::DEFAULT_C_MAX,
            criterion: Criterion::Gic,
            loss_floor: None,
            threshold: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn with_t_max(mut self, t_max: usize) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_t_min(mut self, t_min: usize) -> Self {
        self.t_min = t_min;
        self
    }

    pub fn with_c_max(mut self, c_max: usize) -> Self {
        self.c_max = c_max;
        self
    }

    pub fn with_criterion(mut self, criterion: Criterion) -> Self {
        self.criterion = criterion;
        self
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self, num_groups: usize) -> Result<(), SelectError> {
        if self.t_min < 1 || self.t_min > self.t_max || self.t_max > num_groups {
            return Err(SelectError::Config(format!(
                "need 1 <= t_min ({}) <= t_max ({}) <= J ({num_groups})",
                self.t_min, self.t_max
            )));
        }
        if self.c_max < 1 {
            return Err(SelectError::Config("c_max must be at least 1".into()));
        }
        if let Some(floor) = self.loss_floor {
            if floor.is_nan() || floor <= 0.0 {
                return Err(SelectError::Config(format!(
                    "loss_floor must be positive, got {floor}"
                )));
            }
        }
        Ok(())
    }

    fn floor(&self, design: &GroupedDesign) -> f64 {
        self.loss_floor
            .unwrap_or_else(|| default_loss_floor(design))
    }

    /// Splicing configuration at size `t`; `c_max` is capped at `t`.
    pub fn splicing_config(
        &self,
        design: &GroupedDesign,
        t: usize,
    ) -> Result<GSplicingConfig, SelectError> {
        let wrap = |source| SelectError::Fit { size: t, source };
        let mut cfg = GSplicingConfig::new(design, t)
            .map_err(wrap)?
            .with_c_max(self.c_max.min(t));
        if let Some(pi) = self.threshold {
            cfg = cfg.with_threshold(pi);
        }
        cfg.max_iterations = self.max_iterations;
        Ok(cfg)
    }
}

pub fn record_of(
    design: &GroupedDesign,
    report: &FitReport,
    loss_floor: f64,
) -> Result<CriterionRecord, SelectError> {
    let n = design.n();
    Ok(CriterionRecord {
        size: report.size(),
        support: report.support.clone(),
        num_predictors: report.num_predictors,
        loss: report.loss,
        gic: gic_of(
            report.loss,
            report.num_predictors,
            n,
            design.num_groups(),
            loss_floor,
        )?,
        bic: bic_of(report.loss, report.num_predictors, n, loss_floor)?,
    })
}

/// Index of the smallest value; ties go to the earliest.
fn argmin(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone)]
pub struct SequentialFit {
    pub best: FitReport,
    pub path: Vec<CriterionRecord>,
    /// Every per-size fit, in path order.
    pub fits: Vec<FitReport>,
}

impl SequentialFit {
    pub fn best_size(&self) -> usize {
        self.best.size()
    }
}

/// Sweeps `T = t_min..=t_max`, warm-starting each size from the previous
/// support plus the inactive group most correlated with its residual.
pub fn sgsplicing_fit(
    design: &GroupedDesign,
    config: &SelectorConfig,
) -> Result<SequentialFit, SelectError> {
    config.validate(design.num_groups())?;
    let floor = config.floor(design);
    let mut fits: Vec<FitReport> = Vec::with_capacity(config.t_max - config.t_min + 1);
    let mut path = Vec::with_capacity(fits.capacity());
    for t in config.t_min..=config.t_max {
        let initial = match fits.last() {
            None => initial_active_set(design, t),
            Some(prev) => warm_start(design, &prev.support)
                .map_err(|source| SelectError::Fit { size: t, source })?,
        };
        let cfg = config
            .splicing_config(design, t)?
            .with_initial_active(initial);
        let report =
            gsplicing_fit(design, &cfg).map_err(|source| SelectError::Fit { size: t, source })?;
        path.push(record_of(design, &report, floor)?);
        fits.push(report);
    }
    let best = argmin(path.iter().map(|r| r.value(config.criterion))).expect("path is nonempty");
    Ok(SequentialFit {
        best: fits[best].clone(),
        path,
        fits,
    })
}

/// `prev ∪ {argmax_{j ∉ prev} ‖X_Gᵀ(y − Xβ̂_prev)‖²}`.
fn warm_start(design: &GroupedDesign, prev: &[usize]) -> Result<Vec<usize>, SpliceError> {
    let fit = fit_least_squares(design, prev)?;
    let dual = dual_on_inactive(design, &fit);
    let scores = group_norms_squared(design, &dual);
    let mut best: Option<usize> = None;
    for j in (0..design.num_groups()).filter(|j| prev.binary_search(j).is_err()) {
        if best.is_none_or(|b| scores[j] > scores[b]) {
            best = Some(j);
        }
    }
    let mut next = prev.to_vec();
    next.extend(best);
    next.sort_unstable();
    Ok(next)
}

/// The first pair of golden-section probes on `[t_min, t_max]`.
pub fn initial_probes(t_min: usize, t_max: usize) -> (usize, usize) {
    let (lo, hi) = (t_min as f64, t_max as f64);
    (
        nearest(GOLDEN_LOW * lo + GOLDEN_HIGH * hi),
        nearest(GOLDEN_HIGH * lo + GOLDEN_LOW * hi),
    )
}

/// Result of an integer golden-section search.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenOutcome {
    pub best: usize,
    /// Distinct sizes evaluated, in evaluation order.
    pub evaluated: Vec<usize>,
}

/// Golden-section search for the minimizer of `eval` over `t_min..=t_max`.
///
/// Probes follow `[0.618·lo + 0.382·hi]` and `[0.382·lo + 0.618·hi]`. When
/// rounding makes a new probe coincide with the retained one, the new probe
/// moves one step inward. Once the bracket spans at most three sizes, every
/// size in it is compared. Each size is evaluated at most once.
pub fn golden_section_search<E>(
    t_min: usize,
    t_max: usize,
    mut eval: impl FnMut(usize) -> Result<f64, E>,
) -> Result<GoldenOutcome, GoldenError<E>> {
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut evaluated = Vec::new();
    let mut value = |t: usize, cache: &mut BTreeMap<usize, f64>| -> Result<f64, E> {
        if let Some(&v) = cache.get(&t) {
            return Ok(v);
        }
        let v = eval(t)?;
        cache.insert(t, v);
        evaluated.push(t);
        Ok(v)
    };

    let (mut lo, mut hi) = (t_min, t_max);
    let (mut t1, mut t2) = initial_probes(lo, hi);
    let mut stalled = 0;
    while hi - lo > 2 {
        if t1 >= t2 {
            // Only reachable through rounding on tiny brackets.
            t1 = t1.min(hi - 1).max(lo);
            t2 = t1 + 1;
        }
        let g1 = value(t1, &mut cache).map_err(GoldenError::Eval)?;
        let g2 = value(t2, &mut cache).map_err(GoldenError::Eval)?;
        let width = hi - lo;
        if g1 <= g2 {
            hi = t2;
            t2 = t1;
            t1 = nearest(GOLDEN_LOW * lo as f64 + GOLDEN_HIGH * hi as f64);
            if t1 >= t2 {
                if t2 > lo {
                    t1 = t2 - 1;
                } else {
                    t1 = lo;
                    t2 = lo + 1;
                }
            }
        } else {
            lo = t1;
            t1 = t2;
            t2 = nearest(GOLDEN_HIGH * lo as f64 + GOLDEN_LOW * hi as f64);
            if t2 <= t1 {
                if t1 < hi {
                    t2 = t1 + 1;
                } else {
                    t2 = hi;
                    t1 = hi - 1;
                }
            }
        }
        if hi - lo >= width {
            stalled += 1;
            if stalled >= 2 {
                return Err(GoldenError::Stall { lo, hi });
            }
        } else {
            stalled = 0;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for t in lo..=hi {
        let v = value(t, &mut cache).map_err(GoldenError::Eval)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((t, v));
        }
    }
    Ok(GoldenOutcome {
        best: best.expect("bracket is nonempty").0,
        evaluated,
    })
}

#[derive(Debug)]
pub enum GoldenError<E> {
    Eval(E),
    Stall { lo: usize, hi: usize },
}

/// Upper bound on distinct fits made by [`ggsplicing_fit`].
pub fn golden_fit_bound(t_min: usize, t_max: usize) -> usize {
    let span = (t_max - t_min + 1) as f64;
    (span.ln() / (1.0 / GOLDEN_LOW).ln()).ceil() as usize + 3
}

#[derive(Debug, Clone)]
pub struct GoldenFit {
    pub best: FitReport,
    /// Criterion records for each probed size, in evaluation order.
    pub probes: Vec<CriterionRecord>,
    pub fits: Vec<FitReport>,
}

/// Golden-section search over `T`; every probe starts from [`initial_active_set`].
pub fn ggsplicing_fit(
    design: &GroupedDesign,
    config: &SelectorConfig,
    exec: Execution,
) -> Result<GoldenFit, SelectError> {
    config.validate(design.num_groups())?;
    let floor = config.floor(design);
    let fit_at = |t: usize| -> Result<(FitReport, CriterionRecord), SelectError> {
        let cfg = config.splicing_config(design, t)?;
        let report =
            gsplicing_fit(design, &cfg).map_err(|source| SelectError::Fit { size: t, source })?;
        let record = record_of(design, &report, floor)?;
        Ok((report, record))
    };

    let mut cache: BTreeMap<usize, (FitReport, CriterionRecord)> = BTreeMap::new();
    let mut order = Vec::new();
    if config.t_max - config.t_min > 2 {
        let (t1, t2) = initial_probes(config.t_min, config.t_max);
        let (a, b) = exec.join(|| fit_at(t1), || fit_at(t2));
        cache.insert(t1, a?);
        order.push(t1);
        if t2 != t1 {
            cache.insert(t2, b?);
            order.push(t2);
        }
    }

    let outcome = golden_section_search(config.t_min, config.t_max, |t| {
        if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(t) {
            slot.insert(fit_at(t)?);
            order.push(t);
        }
        Ok(cache[&t].1.value(config.criterion))
    })
    .map_err(|e| match e {
        GoldenError::Eval(e) => e,
        GoldenError::Stall { lo, hi } => SelectError::SearchStall { lo, hi },
    })?;

    let mut probes = Vec::with_capacity(order.len());
    let mut fits = Vec::with_capacity(order.len());
    for t in &order {
        let (report, record) = &cache[t];
        probes.push(record.clone());
        fits.push(report.clone());
    }
    Ok(GoldenFit {
        best: cache[&outcome.best].0.clone(),
        probes,
        fits,
    })
}

/// Whether `values` strictly decrease to a single minimum and strictly increase after it.
pub fn is_strictly_unimodal(values: &[f64]) -> bool {
    let Some(m) = argmin(values.iter().copied()) else {
        return false;
    };
    values[..=m].windows(2).all(|w| w[0] > w[1]) && values[m..].windows(2).all(|w| w[0] < w[1])
}

/// Writes a path as CSV: `T,loss,gic,bic,num_predictors,support,argmin`.
///
/// `support` lists group labels separated by `;`; `argmin` repeats the
/// selected size on every row.
pub fn write_path_csv<W: Write>(
    out: W,
    path: &[CriterionRecord],
    structure: &GroupStructure,
    criterion: Criterion,
) -> csv::Result<()> {
    let best = argmin(path.iter().map(|r| r.value(criterion))).map(|i| path[i].size);
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "T",
        "loss",
        "gic",
        "bic",
        "num_predictors",
        "support",
        "argmin",
    ])?;
    for r in path {
        let support: Vec<&str> = r.support.iter().map(|&j| structure.label(j)).collect();
        w.write_record([
            r.size.to_string(),
            r.loss.to_string(),
            r.gic.to_string(),
            r.bic.to_string(),
            r.num_predictors.to_string(),
            support.join(";"),
            best.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
