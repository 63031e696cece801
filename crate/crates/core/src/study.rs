//! Replicated experiments: simulation studies, stability selection and
//! runtime-scaling sweeps. Replicates are independent and run through
//! [`Execution`]; results always come back in replicate order.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::design::{preprocess, GroupStructure, GroupedDesign};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::MetricsRecord;
use crate::rng::SeedStream;
use crate::selector::{ggsplicing_fit, sgsplicing_fit, Criterion, CriterionRecord, SelectorConfig};
use crate::splicing::{gsplicing_fit, FitReport, GSplicingConfig, DEFAULT_C_MAX};
use crate::synth::{generate, Structure, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fixed size `T`.
    Gsplicing,
    /// Sequential sweep over `T`.
    Sgs,
    /// Golden-section search over `T`.
    Ggs,
}

/// Method plus its hyperparameters; unset bounds take the design-dependent defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    #[serde(default)]
    pub size: Option<usize>,
    #[serde(default)]
    pub t_min: Option<usize>,
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default = "default_c_max")]
    pub c_max: usize,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub criterion: Criterion,
}

fn default_c_max() -> usize {
    DEFAULT_C_MAX
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            size: None,
            t_min: None,
            t_max: None,
            c_max: DEFAULT_C_MAX,
            threshold: None,
            criterion: Criterion::Gic,
        }
    }

    pub fn fixed_size(size: usize) -> Self {
        Self {
            size: Some(size),
            ..Self::new(Method::Gsplicing)
        }
    }

    pub fn with_t_max(mut self, t_max: usize) -> Self {
        self.t_max = Some(t_max);
        self
    }

    pub fn with_c_max(mut self, c_max: usize) -> Self {
        self.c_max = c_max;
        self
    }

    pub fn selector(&self, design: &GroupedDesign) -> SelectorConfig {
        let mut cfg = SelectorConfig::new(design)
            .with_c_max(self.c_max)
            .with_criterion(self.criterion)
            .with_threshold(self.threshold);
        if let Some(t) = self.t_max {
            cfg = cfg.with_t_max(t);
        }
        if let Some(t) = self.t_min {
            cfg = cfg.with_t_min(t);
        }
        cfg
    }
}

/// Every fit a method produced, plus the chosen one.
#[derive(Debug, Clone)]
pub struct MethodFit {
    pub best: FitReport,
    /// Criterion records in evaluation order (empty for fixed-size fits).
    pub path: Vec<CriterionRecord>,
    pub fits: Vec<FitReport>,
}

pub fn run_method(
    design: &GroupedDesign,
    config: &MethodConfig,
    exec: Execution,
) -> Result<MethodFit> {
    match config.method {
        Method::Gsplicing => {
            let size = config
                .size
                .ok_or_else(|| Error::Config("the gsplicing method needs a model size".into()))?;
            let mut cfg = GSplicingConfig::new(design, size)?.with_c_max(config.c_max.min(size));
            if let Some(pi) = config.threshold {
                cfg = cfg.with_threshold(pi);
            }
            let best = gsplicing_fit(design, &cfg)?;
            Ok(MethodFit {
                fits: vec![best.clone()],
                best,
                path: Vec::new(),
            })
        }
        Method::Sgs => {
            let out = sgsplicing_fit(design, &config.selector(design))?;
            Ok(MethodFit {
                best: out.best,
                path: out.path,
                fits: out.fits,
            })
        }
        Method::Ggs => {
            let out = ggsplicing_fit(design, &config.selector(design), exec)?;
            Ok(MethodFit {
                best: out.best,
                path: out.probes,
                fits: out.fits,
            })
        }
    }
}

/// Whether every accepted splice lowered the loss by more than the threshold.
pub fn trace_respects_threshold(report: &FitReport) -> bool {
    report
        .trace
        .windows(2)
        .all(|w| w[0].loss - w[1].loss > report.threshold)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateMetrics {
    pub selected: Vec<usize>,
    pub metrics: MetricsRecord,
    /// Wall-clock seconds spent preprocessing and fitting.
    pub runtime_seconds: f64,
    /// Largest iteration count over all fits of the replicate.
    pub max_iterations: usize,
    /// Every fit's loss trace dropped by more than its threshold per accepted splice.
    pub trace_ok: bool,
}

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    pub result: std::result::Result<ReplicateMetrics, String>,
}

/// Seed of replicate `r` derived from a base seed.
pub fn replicate_seed(base: u64, replicate: usize) -> u64 {
    SeedStream::new(base).child(replicate as u64).seed()
}

/// Generates one dataset, fits it and scores the fit.
pub fn run_replicate(
    spec: &SyntheticSpec,
    method: &MethodConfig,
) -> Result<(ReplicateMetrics, MethodFit)> {
    let truth = generate(spec)?;
    let structure = spec.structure_of_groups();
    let start = Instant::now();
    let design = preprocess(&truth.design_raw, &truth.response, structure)?;
    let fit = run_method(&design, method, Execution::Sequential)?;
    let runtime_seconds = start.elapsed().as_secs_f64();
    let metrics = MetricsRecord::evaluate(
        &fit.best.support,
        &truth.true_support,
        spec.num_groups,
        &fit.best.beta_original,
        &truth.beta_star,
    );
    let out = ReplicateMetrics {
        selected: fit.best.support.clone(),
        metrics,
        runtime_seconds,
        max_iterations: fit.fits.iter().map(|f| f.iterations).max().unwrap_or(0),
        trace_ok: fit.fits.iter().all(trace_respects_threshold),
    };
    Ok((out, fit))
}

/// Runs `replications` independent replicates of `spec`.
pub fn simulate(
    spec: &SyntheticSpec,
    method: &MethodConfig,
    replications: usize,
    exec: Execution,
) -> Vec<ReplicateOutcome> {
    exec.map_indexed(replications, |r| {
        let seed = replicate_seed(spec.seed, r);
        let result = run_replicate(&spec.with_seed(seed), method)
            .map(|(m, _)| m)
            .map_err(|e| e.to_string());
        ReplicateOutcome {
            replicate: r,
            seed,
            result,
        }
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl MeanSd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let count = v.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, count }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub replications: usize,
    pub succeeded: usize,
    pub tpr: MeanSd,
    pub fpr: MeanSd,
    pub mcc: MeanSd,
    pub gse: MeanSd,
    pub reee: MeanSd,
    pub selected_size: MeanSd,
    pub runtime_seconds: MeanSd,
}

impl SimulationSummary {
    pub fn of(outcomes: &[ReplicateOutcome]) -> Self {
        let ok: Vec<&ReplicateMetrics> = outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .collect();
        Self {
            replications: outcomes.len(),
            succeeded: ok.len(),
            tpr: MeanSd::of(ok.iter().filter_map(|m| m.metrics.tpr)),
            fpr: MeanSd::of(ok.iter().filter_map(|m| m.metrics.fpr)),
            mcc: MeanSd::of(ok.iter().map(|m| m.metrics.mcc)),
            gse: MeanSd::of(ok.iter().map(|m| m.metrics.gse as f64)),
            reee: MeanSd::of(ok.iter().filter_map(|m| m.metrics.reee)),
            selected_size: MeanSd::of(ok.iter().map(|m| m.selected.len() as f64)),
            runtime_seconds: MeanSd::of(ok.iter().map(|m| m.runtime_seconds)),
        }
    }

    /// At least 90% of replicates finished.
    pub fn acceptable(&self) -> bool {
        self.succeeded * 10 >= self.replications * 9
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GroupFrequency {
    pub group: usize,
    pub label: String,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Sorted by descending frequency, then group id.
    pub frequencies: Vec<GroupFrequency>,
    pub replications: usize,
    pub failures: Vec<(usize, String)>,
}

/// Fits `method` on `replications` random subsamples of `⌊fraction·n⌋` rows
/// and counts how often each group is selected.
#[allow(clippy::too_many_arguments)]
pub fn stability_selection(
    x_raw: &DMatrix<f64>,
    y_raw: &DVector<f64>,
    structure: &GroupStructure,
    method: &MethodConfig,
    replications: usize,
    fraction: f64,
    seed: u64,
    exec: Execution,
) -> Result<StabilityReport> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "subsample fraction {fraction} must lie in (0, 1)"
        )));
    }
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let n = x_raw.nrows();
    let m = (fraction * n as f64).floor() as usize;
    if m < 3 {
        return Err(Error::Config(format!("subsample of {m} rows is too small")));
    }
    let base = SeedStream::new(seed);
    let selections = exec.map_indexed(
        replications,
        |r| -> std::result::Result<Vec<usize>, String> {
            let mut rows = sample(&mut base.child(r as u64).rng("subsample"), n, m).into_vec();
            rows.sort_unstable();
            let x = x_raw.select_rows(&rows);
            let y = DVector::from_iterator(m, rows.iter().map(|&i| y_raw[i]));
            let design = preprocess(&x, &y, structure.clone()).map_err(|e| e.to_string())?;
            let fit =
                run_method(&design, method, Execution::Sequential).map_err(|e| e.to_string())?;
            Ok(fit.best.support)
        },
    );
    let mut counts = vec![0usize; structure.num_groups()];
    let mut failures = Vec::new();
    for (r, sel) in selections.into_iter().enumerate() {
        match sel {
            Ok(s) => s.iter().for_each(|&j| counts[j] += 1),
            Err(e) => failures.push((r, e)),
        }
    }
    let mut frequencies: Vec<GroupFrequency> = counts
        .iter()
        .enumerate()
        .map(|(j, &count)| GroupFrequency {
            group: j,
            label: structure.label(j).to_string(),
            count,
            frequency: count as f64 / replications as f64,
        })
        .collect();
    frequencies.sort_by(|a, b| b.count.cmp(&a.count).then(a.group.cmp(&b.group)));
    Ok(StabilityReport {
        frequencies,
        replications,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepComponent {
    /// Number of groups `J`.
    Groups,
    /// Sample size `n`.
    Samples,
    /// Group size `K` (`p_max = p_min = K`).
    GroupSize,
}

impl SweepComponent {
    pub fn name(self) -> &'static str {
        match self {
            SweepComponent::Groups => "groups",
            SweepComponent::Samples => "samples",
            SweepComponent::GroupSize => "group_size",
        }
    }
}

/// Runtime-vs-component sweep: one component of `base` varies over `values`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingSweep {
    pub component: SweepComponent,
    pub values: Vec<usize>,
    pub base: SyntheticSpec,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub method: MethodConfig,
}

fn default_reps() -> usize {
    3
}

impl ScalingSweep {
    /// The three preset sweep designs: `a` varies J, `b` varies n, `c` varies the group size.
    pub fn preset(setting: char, method: Method) -> Option<Self> {
        let base = |n, j, k| SyntheticSpec {
            n,
            num_groups: j,
            group_size: k,
            rho: 0.6,
            structure: Structure::Exponential,
            sigma1: 2.0,
            s_star: 10,
            seed: 0,
            true_support: None,
            fixed_coefficient: None,
        };
        let (component, values, base) = match setting.to_ascii_lowercase() {
            'a' => (
                SweepComponent::Groups,
                (700..=1000).step_by(30).collect(),
                base(1000, 700, 3),
            ),
            'b' => (
                SweepComponent::Samples,
                (1000..=1500).step_by(100).collect(),
                base(1000, 1000, 3),
            ),
            'c' => (
                SweepComponent::GroupSize,
                (3..=10).collect(),
                base(500, 500, 3),
            ),
            _ => return None,
        };
        Some(Self {
            component,
            values,
            base,
            reps: default_reps(),
            method: MethodConfig::new(method),
        })
    }

    pub fn spec_at(&self, value: usize) -> SyntheticSpec {
        let mut spec = self.base.clone();
        match self.component {
            SweepComponent::Groups => spec.num_groups = value,
            SweepComponent::Samples => spec.n = value,
            SweepComponent::GroupSize => spec.group_size = value,
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.reps == 0 {
            return Err(Error::Config(
                "a sweep needs at least one value and one rep".into(),
            ));
        }
        for &v in &self.values {
            self.spec_at(v).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    pub component: SweepComponent,
    pub value: usize,
    pub n: usize,
    pub num_groups: usize,
    pub group_size: usize,
    pub reps: usize,
    /// Mean selected size across reps.
    pub mean_selected: f64,
    pub median_runtime_seconds: f64,
}

/// Runs a sweep. Reps are timed one at a time so timings do not compete for cores.
pub fn scaling_study(sweep: &ScalingSweep) -> Result<Vec<ScalingPoint>> {
    sweep.validate()?;
    let mut points = Vec::with_capacity(sweep.values.len());
    for (i, &value) in sweep.values.iter().enumerate() {
        let spec = sweep.spec_at(value);
        let mut times = Vec::with_capacity(sweep.reps);
        let mut selected = 0usize;
        for r in 0..sweep.reps {
            let seed = replicate_seed(spec.seed, i * sweep.reps + r);
            let (m, _) = run_replicate(&spec.with_seed(seed), &sweep.method)?;
            times.push(m.runtime_seconds);
            selected += m.selected.len();
        }
        times.sort_by(f64::total_cmp);
        let mid = times.len() / 2;
        let median = if times.len() % 2 == 1 {
            times[mid]
        } else {
            (times[mid - 1] + times[mid]) / 2.0
        };
        points.push(ScalingPoint {
            component: sweep.component,
            value,
            n: spec.n,
            num_groups: spec.num_groups,
            group_size: spec.group_size,
            reps: sweep.reps,
            mean_selected: selected as f64 / sweep.reps as f64,
            median_runtime_seconds: median,
        });
    }
    Ok(points)
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}
