//! Fixed-size group splicing.
//!
//! Starting from an active set of `T` groups, each round ranks the active
//! groups by backward sacrifice `‖β_G‖²` and the inactive groups by forward
//! sacrifice `‖d_G‖²`, then tries to exchange the `C` weakest active groups
//! for the `C` strongest inactive ones, for `C = c_max, …, 1`. The first
//! exchange whose refit lowers the loss by more than the threshold `π_T` is
//! accepted. The iteration stops when no exchange qualifies.

use std::cmp::Ordering;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::design::GroupedDesign;
use crate::linalg::{
    dual_on_inactive, fit_least_squares, group_norms_squared, LinalgError, SupportFit,
};
use crate::selector::{bic_of, default_loss_floor, gic_of};

pub const DEFAULT_C_MAX: usize = 2;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum SpliceError {
    #[error("invalid splicing configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("exchange size {c} outside 1..={max}")]
    Size { c: usize, max: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("splicing still accepting exchanges after {iterations} iterations")]
    IterationCap { iterations: usize },
}

/// `π_T = 0.1 · T · p_max · ln p · ln ln n / n`.
pub fn default_threshold(t: usize, p: usize, p_max: usize, n: usize) -> Result<f64, SpliceError> {
    let nf = n as f64;
    if nf <= std::f64::consts::E {
        return Err(SpliceError::Domain(format!(
            "ln ln n requires n > e, got n = {n}"
        )));
    }
    Ok(0.1 * t as f64 * p_max as f64 * (p as f64).ln() * nf.ln().ln() / nf)
}

#[derive(Debug, Clone)]
pub struct GSplicingConfig {
    /// Target number of groups `T`.
    pub size: usize,
    pub c_max: usize,
    /// Acceptance threshold `π_T`, in loss units.
    pub threshold: f64,
    pub max_iterations: usize,
    pub initial_active: Option<Vec<usize>>,
}

impl GSplicingConfig {
    /// Defaults for `design`: `c_max = min(2, T)`, `π_T` from [`default_threshold`].
    pub fn new(design: &GroupedDesign, size: usize) -> Result<Self, SpliceError> {
        let threshold =
            default_threshold(size, design.p(), design.structure().p_max(), design.n())?;
        Ok(Self {
            size,
            c_max: DEFAULT_C_MAX.min(size).max(1),
            threshold,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            initial_active: None,
        })
    }

    pub fn with_c_max(mut self, c_max: usize) -> Self {
        self.c_max = c_max;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_initial_active(mut self, active: Vec<usize>) -> Self {
        self.initial_active = Some(active);
        self
    }

    pub fn validate(&self, num_groups: usize) -> Result<(), SpliceError> {
        let bad = |m: String| Err(SpliceError::Config(m));
        if self.size < 1 || self.size > num_groups {
            return bad(format!("T = {} must lie in 1..={num_groups}", self.size));
        }
        if self.c_max < 1 || self.c_max > self.size {
            return bad(format!(
                "c_max = {} must lie in 1..={}",
                self.c_max, self.size
            ));
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return bad(format!(
                "threshold must be nonnegative, got {}",
                self.threshold
            ));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if let Some(init) = &self.initial_active {
            let mut sorted = init.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.size || sorted.iter().any(|&j| j >= num_groups) {
                return bad(format!(
                    "initial active set must hold {} distinct group ids below {num_groups}",
                    self.size
                ));
            }
        }
        Ok(())
    }
}

/// One iterate: the active/inactive partition with its primal and dual variables.
#[derive(Debug, Clone)]
pub struct SpliceState {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    pub fit: SupportFit,
    pub dual: DVector<f64>,
    pub iteration: usize,
}

impl SpliceState {
    /// Fits `active` by least squares and computes the dual on the rest.
    pub fn from_active(
        design: &GroupedDesign,
        active: &[usize],
        iteration: usize,
    ) -> Result<Self, LinalgError> {
        let fit = fit_least_squares(design, active)?;
        let dual = dual_on_inactive(design, &fit);
        let active = fit.support.clone();
        let inactive = (0..design.num_groups())
            .filter(|j| active.binary_search(j).is_err())
            .collect();
        Ok(Self {
            active,
            inactive,
            fit,
            dual,
            iteration,
        })
    }

    pub fn loss(&self) -> f64 {
        self.fit.loss
    }
}

/// Ranks `ids` by `score`; ascending or descending, ties to the lowest id.
fn rank(ids: &[usize], score: &[f64], descending: bool) -> Vec<usize> {
    let mut ranked = ids.to_vec();
    ranked.sort_by(|&a, &b| {
        let ord = score[a].partial_cmp(&score[b]).unwrap_or(Ordering::Equal);
        let ord = if descending { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    ranked
}

/// The `C` active groups with the smallest `‖β_G‖²` and the `C` inactive
/// groups with the largest `‖d_G‖²`, each in ranking order.
pub fn exchange_candidates(
    design: &GroupedDesign,
    state: &SpliceState,
    c: usize,
) -> Result<(Vec<usize>, Vec<usize>), SpliceError> {
    let max = state.active.len().min(state.inactive.len());
    if c < 1 || c > max {
        return Err(SpliceError::Size { c, max });
    }
    let backward = group_norms_squared(design, &state.fit.beta);
    let forward = group_norms_squared(design, &state.dual);
    let mut s1 = rank(&state.active, &backward, false);
    let mut s2 = rank(&state.inactive, &forward, true);
    s1.truncate(c);
    s2.truncate(c);
    Ok((s1, s2))
}

/// The `T` groups with the largest `‖X_Gᵀ y‖²`, returned sorted by id.
pub fn initial_active_set(design: &GroupedDesign, size: usize) -> Vec<usize> {
    let xty = design.x().tr_mul(design.y());
    let scores = group_norms_squared(design, &xty);
    let all: Vec<usize> = (0..design.num_groups()).collect();
    let mut chosen = rank(&all, &scores, true);
    chosen.truncate(size);
    chosen.sort_unstable();
    chosen
}

#[derive(Debug, Clone)]
pub struct SpliceStep {
    pub state: SpliceState,
    pub accepted: bool,
    /// Exchange size of the accepted splice.
    pub exchanged: Option<usize>,
}

/// One round of splicing.
pub fn splice_once(
    design: &GroupedDesign,
    state: SpliceState,
    config: &GSplicingConfig,
) -> Result<SpliceStep, SpliceError> {
    let c_max = config
        .c_max
        .min(state.active.len())
        .min(state.inactive.len());
    if c_max == 0 {
        return Ok(SpliceStep {
            state,
            accepted: false,
            exchanged: None,
        });
    }
    let (s1, s2) = exchange_candidates(design, &state, c_max)?;
    let loss = state.fit.loss;
    for c in (1..=c_max).rev() {
        let dropped = &s1[..c];
        let mut candidate: Vec<usize> = state
            .active
            .iter()
            .copied()
            .filter(|j| !dropped.contains(j))
            .chain(s2[..c].iter().copied())
            .collect();
        candidate.sort_unstable();
        let fit = fit_least_squares(design, &candidate)?;
        if loss - fit.loss > config.threshold {
            let next = SpliceState::from_active(design, &candidate, state.iteration + 1)?;
            return Ok(SpliceStep {
                state: next,
                accepted: true,
                exchanged: Some(c),
            });
        }
    }
    Ok(SpliceStep {
        state,
        accepted: false,
        exchanged: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub active: Vec<usize>,
    pub loss: f64,
    /// Exchange size that produced this iterate; `None` for the starting set.
    pub exchanged: Option<usize>,
}

/// Outcome of a fit at one model size.
#[derive(Debug, Clone)]
pub struct FitReport {
    /// Selected group ids, sorted.
    pub support: Vec<usize>,
    /// Coefficients in the orthonormalized basis.
    pub beta: DVector<f64>,
    /// Coefficients for the raw (uncentered) columns.
    pub beta_original: DVector<f64>,
    pub intercept: f64,
    pub loss: f64,
    pub threshold: f64,
    pub num_predictors: usize,
    pub gic: Option<f64>,
    pub bic: Option<f64>,
    /// Number of accepted splices.
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

impl FitReport {
    pub(crate) fn from_state(
        design: &GroupedDesign,
        state: SpliceState,
        threshold: f64,
        trace: Vec<IterationRecord>,
    ) -> Self {
        let n = design.n();
        let num_predictors = design.structure().num_predictors(&state.active);
        let floor = default_loss_floor(design);
        let loss = state.fit.loss;
        let beta_original = design.to_original(&state.fit.beta);
        Self {
            intercept: design.intercept(&beta_original),
            beta_original,
            gic: gic_of(loss, num_predictors, n, design.num_groups(), floor).ok(),
            bic: bic_of(loss, num_predictors, n, floor).ok(),
            num_predictors,
            iterations: state.iteration,
            support: state.active,
            beta: state.fit.beta,
            loss,
            threshold,
            trace,
        }
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }
}

/// Runs splicing at fixed size until no exchange is accepted.
pub fn gsplicing_fit(
    design: &GroupedDesign,
    config: &GSplicingConfig,
) -> Result<FitReport, SpliceError> {
    config.validate(design.num_groups())?;
    let initial = match &config.initial_active {
        Some(init) => init.clone(),
        None => initial_active_set(design, config.size),
    };
    let mut state = SpliceState::from_active(design, &initial, 0)?;
    let mut trace = vec![IterationRecord {
        iteration: 0,
        active: state.active.clone(),
        loss: state.fit.loss,
        exchanged: None,
    }];
    loop {
        if state.iteration >= config.max_iterations {
            // One more round decides whether the cap cut the run short.
            let probe = splice_once(design, state.clone(), config)?;
            if probe.accepted {
                return Err(SpliceError::IterationCap {
                    iterations: config.max_iterations,
                });
            }
            break;
        }
        let step = splice_once(design, state, config)?;
        state = step.state;
        if !step.accepted {
            break;
        }
        trace.push(IterationRecord {
            iteration: state.iteration,
            active: state.active.clone(),
            loss: state.fit.loss,
            exchanged: step.exchanged,
        });
    }
    Ok(FitReport::from_state(
        design,
        state,
        config.threshold,
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{preprocess, GroupStructure};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn threshold_formula() {
        let pi = default_threshold(5, 600, 3, 200).unwrap();
        assert!((pi - 0.0800).abs() < 1e-3);
        assert_eq!(default_threshold(0, 600, 3, 200).unwrap(), 0.0);
        assert!(matches!(
            default_threshold(5, 600, 3, 2),
            Err(SpliceError::Domain(_))
        ));
    }

    #[test]
    fn initial_set_picks_signal_group() {
        // Groups built from disjoint row blocks are exactly orthogonal.
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = DMatrix::zeros(n, 4);
        for g in 0..4 {
            for i in 0..n {
                if i % 4 == g {
                    x[(i, g)] = rng.sample(StandardNormal);
                }
            }
        }
        let y = x.column(2) * 3.0;
        let d = preprocess(&x, &y, GroupStructure::contiguous(4, 1).unwrap()).unwrap();
        assert_eq!(initial_active_set(&d, 1), vec![2]);
        assert_eq!(initial_active_set(&d, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn initial_set_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = normal_matrix(40, 24, &mut rng);
        let y = DVector::from_fn(40, |_, _| rng.sample(StandardNormal));
        let d = preprocess(&x, &y, GroupStructure::contiguous(8, 3).unwrap()).unwrap();
        let mut scores: Vec<(f64, usize)> = (0..8)
            .map(|j| {
                let xg = d.x().select_columns(d.structure().group(j));
                ((xg.transpose() * d.y()).norm_squared(), j)
            })
            .collect();
        scores.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut expected: Vec<usize> = scores[..3].iter().map(|s| s.1).collect();
        expected.sort_unstable();
        assert_eq!(initial_active_set(&d, 3), expected);
    }

    #[test]
    fn candidates_rank_both_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = normal_matrix(80, 20, &mut rng);
        let y = DVector::from_fn(80, |_, _| rng.sample(StandardNormal));
        let d = preprocess(&x, &y, GroupStructure::contiguous(10, 2).unwrap()).unwrap();
        let state = SpliceState::from_active(&d, &[0, 3, 4, 7, 9], 0).unwrap();
        let (s1, s2) = exchange_candidates(&d, &state, 3).unwrap();

        let norm = |v: &DVector<f64>, j: usize| -> f64 {
            d.structure().group(j).iter().map(|&c| v[c] * v[c]).sum()
        };
        let mut act: Vec<(f64, usize)> = state
            .active
            .iter()
            .map(|&j| (norm(&state.fit.beta, j), j))
            .collect();
        act.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut ina: Vec<(f64, usize)> = state
            .inactive
            .iter()
            .map(|&j| (norm(&state.dual, j), j))
            .collect();
        ina.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        assert_eq!(s1, act[..3].iter().map(|a| a.1).collect::<Vec<_>>());
        assert_eq!(s2, ina[..3].iter().map(|a| a.1).collect::<Vec<_>>());

        let (all, _) = exchange_candidates(&d, &state, 5).unwrap();
        let mut all_sorted = all.clone();
        all_sorted.sort_unstable();
        assert_eq!(all_sorted, state.active);
        assert!(matches!(
            exchange_candidates(&d, &state, 6),
            Err(SpliceError::Size { .. })
        ));
        assert!(matches!(
            exchange_candidates(&d, &state, 0),
            Err(SpliceError::Size { .. })
        ));
    }

    #[test]
    fn rank_breaks_ties_by_id() {
        let score = [4.0, 0.1, 0.1, 2.0];
        assert_eq!(rank(&[0, 1, 2, 3], &score, false), vec![1, 2, 3, 0]);
        assert_eq!(rank(&[0, 1, 2, 3], &score, true), vec![0, 3, 1, 2]);
    }

    fn single_signal(seed: u64) -> GroupedDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_matrix(60, 8, &mut rng);
        let y = x.column(2) * 4.0 - x.column(3) * 3.0;
        preprocess(&x, &y, GroupStructure::contiguous(4, 2).unwrap()).unwrap()
    }

    #[test]
    fn wrong_start_swaps_to_signal() {
        let d = single_signal(3);
        let cfg = GSplicingConfig::new(&d, 1).unwrap();
        let state = SpliceState::from_active(&d, &[0], 0).unwrap();
        let wrong_loss = state.loss();
        let step = splice_once(&d, state, &cfg).unwrap();
        assert!(step.accepted);
        assert_eq!(step.exchanged, Some(1));
        assert_eq!(step.state.active, vec![1]);
        assert!(step.state.loss() < 1e-20);
        let oracle = fit_least_squares(&d, &[1]).unwrap();
        assert!((wrong_loss - fit_least_squares(&d, &[0]).unwrap().loss).abs() < 1e-12);
        assert!(oracle.loss < 1e-20);
    }

    #[test]
    fn optimal_state_is_not_spliced() {
        let d = single_signal(4);
        let cfg = GSplicingConfig::new(&d, 1).unwrap();
        let state = SpliceState::from_active(&d, &[1], 0).unwrap();
        let step = splice_once(&d, state, &cfg).unwrap();
        assert!(!step.accepted);
        assert_eq!(step.state.active, vec![1]);
    }

    #[test]
    fn infinite_threshold_never_accepts() {
        let d = single_signal(5);
        let cfg = GSplicingConfig::new(&d, 1)
            .unwrap()
            .with_threshold(f64::INFINITY);
        let state = SpliceState::from_active(&d, &[0], 0).unwrap();
        assert!(!splice_once(&d, state, &cfg).unwrap().accepted);
    }

    #[test]
    fn noiseless_single_signal_fit() {
        let d = single_signal(6);
        let cfg = GSplicingConfig::new(&d, 1).unwrap();
        let report = gsplicing_fit(&d, &cfg).unwrap();
        assert_eq!(report.support, vec![1]);
        assert!(report.loss < 1e-20);
        assert!(report.iterations <= 1);
        assert_eq!(report.trace.len(), report.iterations + 1);
    }

    #[test]
    fn config_validation() {
        let d = single_signal(7);
        let cfg = GSplicingConfig::new(&d, 2).unwrap();
        assert!(cfg.validate(4).is_ok());
        assert!(cfg.clone().with_c_max(3).validate(4).is_err());
        assert!(cfg.clone().with_threshold(-1.0).validate(4).is_err());
        assert!(cfg
            .clone()
            .with_initial_active(vec![0, 0])
            .validate(4)
            .is_err());
        let mut too_big = cfg.clone();
        too_big.size = 5;
        assert!(too_big.validate(4).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let d = single_signal(8);
        let mut cfg = GSplicingConfig::new(&d, 1)
            .unwrap()
            .with_initial_active(vec![0]);
        cfg.max_iterations = 1;
        // One accepted splice reaches the optimum, so the cap is not an error.
        assert!(gsplicing_fit(&d, &cfg).is_ok());
    }
}
