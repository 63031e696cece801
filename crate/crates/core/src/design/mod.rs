//! Group-partitioned regression problems.
//!
//! A [`GroupedDesign`] holds the centered response and a design matrix whose
//! column blocks have been orthonormalized group by group, so that
//! `X_Gᵀ X_G / n = I` for every group `G`. The per-group back-transforms let
//! coefficients be reported in the coordinates of the raw columns.

mod ingest;

pub use ingest::{export_csv, ingest_csv, IngestedData};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular-value cutoff below which a group block is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("group structure must contain at least one group and one column")]
    Empty,
    #[error("group {group} is empty")]
    EmptyGroup { group: usize },
    #[error("column {column} appears in groups {first} and {second}")]
    Overlap {
        column: usize,
        first: usize,
        second: usize,
    },
    #[error("column {column} is out of range or not covered by any group (p = {p})")]
    Coverage { column: usize, p: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("group {group} is rank deficient after centering (singular value ratio {ratio:.3e})")]
    Rank { group: usize, ratio: f64 },
    #[error("{path}: parse error at row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("column `{column}` named in {source_name} does not exist in the design")]
    UnknownColumn { column: String, source_name: String },
    #[error(transparent)]
    Unmapped(#[from] UnmappedColumn),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum UnmappedColumn {
    #[error("design column `{0}` is not assigned to a group")]
    NotInGroupMap(String),
    #[error("response column `{0}` must not be assigned to a group")]
    ResponseInGroupMap(String),
}

/// A partition of the predictor columns `0..p` into `J` disjoint groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
    labels: Vec<String>,
    p: usize,
}

impl GroupStructure {
    /// Validates raw index sets (0-based column indices) against `p` columns.
    pub fn new(raw_groups: Vec<Vec<usize>>, p: usize) -> Result<Self, DesignError> {
        validate_groups(raw_groups, p)
    }

    /// `J` contiguous groups of `size` columns each.
    pub fn contiguous(num_groups: usize, size: usize) -> Result<Self, DesignError> {
        let groups = (0..num_groups)
            .map(|j| (j * size..(j + 1) * size).collect())
            .collect();
        validate_groups(groups, num_groups * size)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, DesignError> {
        if labels.len() != self.groups.len() {
            return Err(DesignError::Shape(format!(
                "{} labels for {} groups",
                labels.len(),
                self.groups.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_columns(&self) -> usize {
        self.p
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_size(&self, j: usize) -> usize {
        self.groups[j].len()
    }

    pub fn label(&self, j: usize) -> &str {
        &self.labels[j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn p_min(&self) -> usize {
        self.groups.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn p_max(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `#{A}`: the number of predictor columns inside a set of groups.
    pub fn num_predictors(&self, support: &[usize]) -> usize {
        support.iter().map(|&j| self.groups[j].len()).sum()
    }

    /// Column indices of a support, group by group in support order.
    pub fn columns_of(&self, support: &[usize]) -> Vec<usize> {
        support
            .iter()
            .flat_map(|&j| self.groups[j].iter().copied())
            .collect()
    }
}

/// Checks that `raw_groups` partitions `0..p`; indices are sorted within each group.
pub fn validate_groups(
    raw_groups: Vec<Vec<usize>>,
    p: usize,
) -> Result<GroupStructure, DesignError> {
    if p == 0 || raw_groups.is_empty() {
        return Err(DesignError::Empty);
    }
    let mut owner: Vec<Option<usize>> = vec![None; p];
    let mut groups = Vec::with_capacity(raw_groups.len());
    for (j, mut group) in raw_groups.into_iter().enumerate() {
        if group.is_empty() {
            return Err(DesignError::EmptyGroup { group: j });
        }
        group.sort_unstable();
        for &column in &group {
            if column >= p {
                return Err(DesignError::Coverage { column, p });
            }
            match owner[column] {
                Some(first) => {
                    return Err(DesignError::Overlap {
                        column,
                        first,
                        second: j,
                    })
                }
                None => owner[column] = Some(j),
            }
        }
        groups.push(group);
    }
    if let Some(column) = owner.iter().position(Option::is_none) {
        return Err(DesignError::Coverage { column, p });
    }
    let labels = (1..=groups.len()).map(|j| format!("g{j}")).collect();
    Ok(GroupStructure { groups, labels, p })
}

/// A centered, groupwise-orthonormalized regression problem.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    x: DMatrix<f64>,
    y: DVector<f64>,
    structure: GroupStructure,
    column_means: DVector<f64>,
    y_mean: f64,
    /// `√n R⁻¹` per group: orthonormal-basis coefficients to raw-basis coefficients.
    back_transforms: Vec<DMatrix<f64>>,
    /// `R / √n` per group, the inverse of the back-transform.
    forward_transforms: Vec<DMatrix<f64>>,
}

impl GroupedDesign {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn structure(&self) -> &GroupStructure {
        &self.structure
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn num_groups(&self) -> usize {
        self.structure.num_groups()
    }

    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn back_transform(&self, j: usize) -> &DMatrix<f64> {
        &self.back_transforms[j]
    }

    /// Maps coefficients from the orthonormal basis to the raw-column basis.
    pub fn to_original(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.map_groups(beta, &self.back_transforms)
    }

    /// Inverse of [`GroupedDesign::to_original`].
    pub fn to_orthonormal(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.map_groups(beta, &self.forward_transforms)
    }

    fn map_groups(&self, beta: &DVector<f64>, transforms: &[DMatrix<f64>]) -> DVector<f64> {
        assert_eq!(beta.len(), self.p(), "coefficient length mismatch");
        let mut out = DVector::zeros(self.p());
        for (cols, m) in self.structure.groups.iter().zip(transforms) {
            let block = DVector::from_iterator(cols.len(), cols.iter().map(|&c| beta[c]));
            if block.iter().all(|v| *v == 0.0) {
                continue;
            }
            let mapped = m * block;
            for (k, &c) in cols.iter().enumerate() {
                out[c] = mapped[k];
            }
        }
        out
    }

    /// `ȳ − meansᵀ β` for raw-basis coefficients.
    pub fn intercept(&self, beta_original: &DVector<f64>) -> f64 {
        self.y_mean - self.column_means.dot(beta_original)
    }

    /// Centers raw columns using the means of the data this design was built from.
    pub fn centered_columns_of(&self, x_raw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x_raw.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.column_means[c]);
        }
        out
    }
}

/// Centers `x_raw` and `y_raw` and orthonormalizes each group block by thin QR,
/// scaled so that `X_Gᵀ X_G / n = I`.
pub fn preprocess(
    x_raw: &DMatrix<f64>,
    y_raw: &DVector<f64>,
    structure: GroupStructure,
) -> Result<GroupedDesign, DesignError> {
    let n = x_raw.nrows();
    if y_raw.len() != n {
        return Err(DesignError::Shape(format!(
            "design has {n} rows but response has {} entries",
            y_raw.len()
        )));
    }
    if x_raw.ncols() != structure.num_columns() {
        return Err(DesignError::Shape(format!(
            "design has {} columns but group structure covers {}",
            x_raw.ncols(),
            structure.num_columns()
        )));
    }
    if n < 2 {
        return Err(DesignError::Shape(format!(
            "need at least 2 samples, got {n}"
        )));
    }

    let nf = n as f64;
    let column_means = DVector::from_iterator(x_raw.ncols(), x_raw.column_iter().map(|c| c.mean()));
    let y_mean = y_raw.mean();
    let y = y_raw.add_scalar(-y_mean);
    let sqrt_n = nf.sqrt();

    let mut x = DMatrix::zeros(n, x_raw.ncols());
    let mut back_transforms = Vec::with_capacity(structure.num_groups());
    let mut forward_transforms = Vec::with_capacity(structure.num_groups());
    for (j, cols) in structure.groups.iter().enumerate() {
        let pj = cols.len();
        if pj > n {
            return Err(DesignError::Rank {
                group: j,
                ratio: 0.0,
            });
        }
        let mut block = x_raw.select_columns(cols);
        for (k, mut col) in block.column_iter_mut().enumerate() {
            col.add_scalar_mut(-column_means[cols[k]]);
        }

        let sv = block.singular_values();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
        let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if ratio.is_nan() || ratio < RANK_TOLERANCE {
            return Err(DesignError::Rank { group: j, ratio });
        }

        let qr = block.qr();
        let mut q = qr.q();
        let mut r = qr.r();
        for k in 0..pj {
            if r[(k, k)] < 0.0 {
                q.column_mut(k).neg_mut();
                r.row_mut(k).neg_mut();
            }
        }
        for (k, &c) in cols.iter().enumerate() {
            x.set_column(c, &(q.column(k) * sqrt_n));
        }
        let r_inv = r
            .clone()
            .solve_upper_triangular(&DMatrix::identity(pj, pj))
            .ok_or(DesignError::Rank { group: j, ratio })?;
        back_transforms.push(r_inv * sqrt_n);
        forward_transforms.push(r / sqrt_n);
    }

    Ok(GroupedDesign {
        x,
        y,
        structure,
        column_means,
        y_mean,
        back_transforms,
        forward_transforms,
    })
}
