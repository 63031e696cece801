//! Least-squares primitives on a group support.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::design::GroupedDesign;

/// Relative pivot size below which a support's column block is treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

/// Losses below this value are flagged as a (numerically) perfect fit.
pub const NEAR_ZERO_LOSS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("support {support:?} spans {columns} columns but only {n} samples are available")]
    SupportTooLarge {
        support: Vec<usize>,
        columns: usize,
        n: usize,
    },
    #[error("least-squares system on support {support:?} is numerically singular")]
    SingularSupport { support: Vec<usize> },
    #[error("group id {group} out of range (J = {num_groups})")]
    UnknownGroup { group: usize, num_groups: usize },
}

/// Least-squares fit restricted to a set of groups.
#[derive(Debug, Clone)]
pub struct SupportFit {
    /// Sorted group ids.
    pub support: Vec<usize>,
    /// Orthonormal-basis coefficients, zero outside the support columns.
    pub beta: DVector<f64>,
    pub residual: DVector<f64>,
    pub loss: f64,
}

impl SupportFit {
    pub fn near_zero(&self) -> bool {
        self.loss < NEAR_ZERO_LOSS
    }
}

/// `‖y − Xβ‖² / 2n`.
pub fn loss_of(design: &GroupedDesign, beta: &DVector<f64>) -> f64 {
    let residual = design.y() - design.x() * beta;
    residual.norm_squared() / (2.0 * design.n() as f64)
}

/// Exact least squares on the columns of `support`; coefficients elsewhere are zero.
pub fn fit_least_squares(
    design: &GroupedDesign,
    support: &[usize],
) -> Result<SupportFit, LinalgError> {
    let n = design.n();
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if let Some(&group) = support.iter().find(|&&g| g >= design.num_groups()) {
        return Err(LinalgError::UnknownGroup {
            group,
            num_groups: design.num_groups(),
        });
    }
    let columns = design.structure().columns_of(&support);
    if columns.len() >= n {
        return Err(LinalgError::SupportTooLarge {
            support,
            columns: columns.len(),
            n,
        });
    }

    let mut beta = DVector::zeros(design.p());
    if columns.is_empty() {
        let residual = design.y().clone();
        let loss = residual.norm_squared() / (2.0 * n as f64);
        return Ok(SupportFit {
            support,
            beta,
            residual,
            loss,
        });
    }

    let xa = design.x().select_columns(&columns);
    let coef = solve_qr(xa.clone(), design.y()).ok_or_else(|| LinalgError::SingularSupport {
        support: support.clone(),
    })?;
    for (k, &c) in columns.iter().enumerate() {
        beta[c] = coef[k];
    }
    let residual = design.y() - xa * coef;
    let loss = residual.norm_squared() / (2.0 * n as f64);
    Ok(SupportFit {
        support,
        beta,
        residual,
        loss,
    })
}

/// Solves `min ‖a·x − b‖` by Householder QR; `None` when a pivot of `R` is tiny.
fn solve_qr(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let k = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    if scale == 0.0 || (0..k).any(|i| r[(i, i)].abs() < SINGULAR_TOLERANCE * scale) {
        return None;
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let qtb = qtb.rows(0, k).into_owned();
    r.solve_upper_triangular(&qtb)
}

/// Group-wise residual correlations `X_Gᵀ r / n` on inactive groups, zero on the support.
pub fn dual_on_inactive(design: &GroupedDesign, fit: &SupportFit) -> DVector<f64> {
    let n = design.n() as f64;
    let mut d = design.x().tr_mul(&fit.residual) / n;
    let scale = 1.0 + design.y().norm() / n.sqrt();
    for &j in &fit.support {
        for &c in design.structure().group(j) {
            debug_assert!(
                d[c].abs() <= 1e-8 * scale,
                "residual not orthogonal to active column {c}: {}",
                d[c]
            );
            d[c] = 0.0;
        }
    }
    d
}

/// `‖v_G‖²` for every group.
pub fn group_norms_squared(design: &GroupedDesign, v: &DVector<f64>) -> Vec<f64> {
    design
        .structure()
        .groups()
        .iter()
        .map(|cols| cols.iter().map(|&c| v[c] * v[c]).sum())
        .collect()
}

/// Loss increase from zeroing active group `j` without refitting: `‖β_G‖² / 2`.
pub fn backward_sacrifice(design: &GroupedDesign, beta: &DVector<f64>, j: usize) -> f64 {
    design
        .structure()
        .group(j)
        .iter()
        .map(|&c| beta[c] * beta[c])
        .sum::<f64>()
        / 2.0
}

/// Best loss decrease from adding inactive group `j` alone: `‖d_G‖² / 2`.
pub fn forward_sacrifice(design: &GroupedDesign, dual: &DVector<f64>, j: usize) -> f64 {
    design
        .structure()
        .group(j)
        .iter()
        .map(|&c| dual[c] * dual[c])
        .sum::<f64>()
        / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{preprocess, GroupStructure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(n: usize, groups: usize, size: usize, seed: u64) -> GroupedDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, groups * size, |_, _| rng.sample(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        preprocess(&x, &y, GroupStructure::contiguous(groups, size).unwrap()).unwrap()
    }

    #[test]
    fn empty_support_loss_is_half_mean_square() {
        let d = random_design(30, 3, 2, 1);
        let fit = fit_least_squares(&d, &[]).unwrap();
        assert_eq!(fit.beta.iter().filter(|v| **v != 0.0).count(), 0);
        let expected = d.y().norm_squared() / 60.0;
        assert!((fit.loss - expected).abs() < 1e-14);
        assert!((loss_of(&d, &fit.beta) - expected).abs() < 1e-14);
    }

    #[test]
    fn response_in_span_gives_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 25;
        let x = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = x.column(2) * 1.5 - x.column(3) * 0.5;
        let d = preprocess(&x, &y, GroupStructure::contiguous(2, 2).unwrap()).unwrap();
        let fit = fit_least_squares(&d, &[1]).unwrap();
        assert!(fit.loss < 1e-24);
        assert!(fit.residual.amax() < 1e-12);
        assert!(fit.near_zero());
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let d = random_design(40, 4, 1, 9);
        let fit = fit_least_squares(&d, &[3, 1]).unwrap();
        assert_eq!(fit.support, vec![1, 3]);
        let xa = d.x().select_columns(&[1, 3]);
        let gram_inv = (xa.transpose() * &xa).try_inverse().unwrap();
        let coef = gram_inv * xa.transpose() * d.y();
        assert!((fit.beta[1] - coef[0]).abs() < 1e-10);
        assert!((fit.beta[3] - coef[1]).abs() < 1e-10);
        assert_eq!(fit.beta[0], 0.0);
        assert_eq!(fit.beta[2], 0.0);
        assert!((loss_of(&d, &fit.beta) - fit.loss).abs() <= 1e-12 * fit.loss);
        let xtr = xa.tr_mul(&fit.residual) / 40.0;
        assert!(xtr.amax() <= 1e-8);
    }

    #[test]
    fn support_too_large() {
        let d = random_design(6, 3, 2, 2);
        assert!(matches!(
            fit_least_squares(&d, &[0, 1, 2]),
            Err(LinalgError::SupportTooLarge {
                columns: 6,
                n: 6,
                ..
            })
        ));
    }

    #[test]
    fn unknown_group() {
        let d = random_design(10, 2, 1, 2);
        assert!(matches!(
            fit_least_squares(&d, &[5]),
            Err(LinalgError::UnknownGroup { group: 5, .. })
        ));
    }

    #[test]
    fn singular_support_detected() {
        // Two single-column groups holding the same centered column.
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let col = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_columns(&[col.clone(), col * 3.0]);
        let y = DVector::from_fn(n, |i, _| i as f64);
        let d = preprocess(&x, &y, GroupStructure::contiguous(2, 1).unwrap()).unwrap();
        assert!(matches!(
            fit_least_squares(&d, &[0, 1]),
            Err(LinalgError::SingularSupport { .. })
        ));
    }

    #[test]
    fn dual_is_zero_on_full_support() {
        let d = random_design(30, 3, 2, 5);
        let fit = fit_least_squares(&d, &[0, 1, 2]).unwrap();
        let dual = dual_on_inactive(&d, &fit);
        assert!(dual.amax() < 1e-12);
    }

    #[test]
    fn dual_of_empty_support_is_marginal_correlation() {
        let d = random_design(30, 3, 2, 6);
        let fit = fit_least_squares(&d, &[]).unwrap();
        let dual = dual_on_inactive(&d, &fit);
        let expected = d.x().tr_mul(d.y()) / 30.0;
        assert!((dual - expected).amax() < 1e-14);
    }

    #[test]
    fn loss_of_zero_response_is_fitted_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(20, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::zeros(20);
        let d = preprocess(&x, &y, GroupStructure::contiguous(1, 2).unwrap()).unwrap();
        let beta = DVector::from_vec(vec![0.7, -0.2]);
        let expected = (d.x() * &beta).norm_squared() / 40.0;
        assert!((loss_of(&d, &beta) - expected).abs() < 1e-14);
    }

    #[test]
    fn sacrifices_match_refits() {
        let d = random_design(60, 6, 3, 12);
        let fit = fit_least_squares(&d, &[0, 2, 4]).unwrap();
        let dual = dual_on_inactive(&d, &fit);
        for &j in &[0, 2, 4] {
            let mut zeroed = fit.beta.clone();
            for &c in d.structure().group(j) {
                zeroed[c] = 0.0;
            }
            let delta = loss_of(&d, &zeroed) - fit.loss;
            let closed = backward_sacrifice(&d, &fit.beta, j);
            assert!((delta - closed).abs() <= 1e-8 * closed.abs().max(1e-300));
        }
        for &j in &[1, 3, 5] {
            let added = fit_least_squares(&d, &[0, 2, 4, j]).unwrap();
            // Adding one orthonormal group to a fixed β: the optimal step is t_G = d_G.
            let mut stepped = fit.beta.clone();
            for &c in d.structure().group(j) {
                stepped[c] = dual[c];
            }
            let delta = fit.loss - loss_of(&d, &stepped);
            let closed = forward_sacrifice(&d, &dual, j);
            assert!((delta - closed).abs() <= 1e-8 * closed);
            assert!(added.loss <= loss_of(&d, &stepped) + 1e-12);
        }
    }
}
