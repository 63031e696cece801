//! Selection and estimation metrics for one replicate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::splicing::FitReport;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("relative error is undefined for an all-zero true coefficient vector")]
    ZeroTruth,
    #[error("schema mismatch: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Confusion counts of a selected group set against the truth among `J` groups.
pub fn confusion_of(selected: &[usize], truth: &[usize], num_groups: usize) -> Confusion {
    let tp = selected.iter().filter(|j| truth.contains(j)).count();
    let fp = selected.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = num_groups - tp - fp - fn_;
    Confusion { tp, fp, tn, fn_ }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    /// Missing when the truth is empty.
    pub tpr: Option<f64>,
    /// Missing when every group is true.
    pub fpr: Option<f64>,
    pub mcc: f64,
}

pub fn rates_of(c: Confusion) -> Rates {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    };
    Rates {
        tpr: ratio(c.tp, c.tp + c.fn_),
        fpr: ratio(c.fp, c.fp + c.tn),
        mcc,
    }
}

/// `|Â| − |A*|`.
pub fn gse_of(selected: &[usize], truth: &[usize]) -> i64 {
    selected.len() as i64 - truth.len() as i64
}

/// `‖β̂ − β*‖ / ‖β*‖`; both vectors in the raw-column basis.
pub fn reee_of(beta_hat: &DVector<f64>, beta_star: &DVector<f64>) -> Result<f64, MetricsError> {
    let scale = beta_star.norm();
    if scale == 0.0 {
        return Err(MetricsError::ZeroTruth);
    }
    Ok((beta_hat - beta_star).norm() / scale)
}

/// Mean squared error of `intercept + X β̂` on held-out raw data.
pub fn prediction_error(
    fit: &FitReport,
    x_holdout: &DMatrix<f64>,
    y_holdout: &DVector<f64>,
) -> Result<f64, MetricsError> {
    if x_holdout.ncols() != fit.beta_original.len() {
        return Err(MetricsError::Schema(format!(
            "holdout has {} columns, fit has {}",
            x_holdout.ncols(),
            fit.beta_original.len()
        )));
    }
    if x_holdout.nrows() != y_holdout.len() || y_holdout.is_empty() {
        return Err(MetricsError::Schema(format!(
            "holdout has {} rows and {} responses",
            x_holdout.nrows(),
            y_holdout.len()
        )));
    }
    let pred = x_holdout * &fit.beta_original;
    let err = y_holdout - pred.add_scalar(fit.intercept);
    Ok(err.norm_squared() / y_holdout.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub mcc: f64,
    pub gse: i64,
    pub reee: Option<f64>,
    pub pe: Option<f64>,
}

impl MetricsRecord {
    pub fn evaluate(
        selected: &[usize],
        truth: &[usize],
        num_groups: usize,
        beta_hat: &DVector<f64>,
        beta_star: &DVector<f64>,
    ) -> Self {
        let confusion = confusion_of(selected, truth, num_groups);
        let rates = rates_of(confusion);
        Self {
            confusion,
            tpr: rates.tpr,
            fpr: rates.fpr,
            mcc: rates.mcc,
            gse: gse_of(selected, truth),
            reee: reee_of(beta_hat, beta_star).ok(),
            pe: None,
        }
    }
}
