//! Exhaustive best-subset-of-groups search for small problems.

use std::cmp::Ordering;

use itertools::Itertools;
use thiserror::Error;

use crate::design::GroupedDesign;
use crate::exec::Execution;
use crate::linalg::{fit_least_squares, LinalgError};

/// Maximum number of supports [`exhaustive_bsgs`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("C({num_groups}, {size}) = {count} supports exceeds the enumeration limit")]
    TooLarge {
        num_groups: usize,
        size: usize,
        count: u128,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_support: Vec<usize>,
    pub best_loss: f64,
    pub num_candidates: usize,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn better(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> bool {
    match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.1 < b.1,
    }
}

/// Refits every size-`T` group subset and returns the loss minimizer.
/// Equal losses resolve to the lexicographically smallest support.
pub fn exhaustive_bsgs(
    design: &GroupedDesign,
    size: usize,
    exec: Execution,
) -> Result<OracleResult, OracleError> {
    let j = design.num_groups();
    let count = binomial(j, size);
    if count > ENUMERATION_LIMIT || size > j {
        return Err(OracleError::TooLarge {
            num_groups: j,
            size,
            count,
        });
    }
    let supports: Vec<Vec<usize>> = (0..j).combinations(size).collect();
    let fits = exec.map_indexed(supports.len(), |i| {
        fit_least_squares(design, &supports[i]).map(|f| f.loss)
    });
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (support, loss) in supports.iter().zip(fits) {
        let cand = (loss?, support.clone());
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    let (best_loss, best_support) = best.expect("at least one support");
    Ok(OracleResult {
        best_support,
        best_loss,
        num_candidates: supports.len(),
    })
}
