//! Synthetic grouped regression problems.
//!
//! Latent columns `X̃` have rows drawn from `N(0, Σ)`; each of the `K`
//! columns of group `j` is `(X̃_j + R) / √2` with an independent standard
//! normal `R`. Each true group's coefficients are `K` of `K + 1` standard
//! normal draws, centered by the mean of all `K + 1`.
//!
//! Every random quantity comes from its own named sub-stream of the seed:
//! `latent`, `noise_columns`, `support`, `gamma` and `epsilon`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::GroupStructure;
use crate::rng::SeedStream;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(
        "covariance matrix is not positive definite ({structure:?}, rho = {rho}, J = {num_groups})"
    )]
    Cholesky {
        structure: Structure,
        rho: f64,
        num_groups: usize,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// `Σ_ij = ρ^|i−j|`.
    Exponential,
    /// `Σ_ij = ρ` off the diagonal.
    Constant,
    /// Every design entry i.i.d. `N(0, 1)`; no latent columns.
    Iid,
}

/// Recipe for one synthetic dataset. Serialized with the keys
/// `n, J, K, rho, structure, sigma1, s_star, seed, true_support, fixed_coefficient`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    #[serde(rename = "J")]
    pub num_groups: usize,
    #[serde(rename = "K")]
    pub group_size: usize,
    #[serde(default)]
    pub rho: f64,
    pub structure: Structure,
    pub sigma1: f64,
    pub s_star: usize,
    #[serde(default)]
    pub seed: u64,
    /// Explicit true groups, 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_support: Option<Vec<usize>>,
    /// Sets every true coefficient to this value instead of centered normal draws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_coefficient: Option<f64>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if self.n < 2 {
            return bad(format!("n = {} must be at least 2", self.n));
        }
        if self.num_groups < 1 || self.group_size < 1 {
            return bad("J and K must be positive".into());
        }
        if self.s_star > self.num_groups {
            return bad(format!(
                "s_star = {} exceeds J = {}",
                self.s_star, self.num_groups
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho = {} outside [0, 1]", self.rho));
        }
        if !self.sigma1.is_finite() || self.sigma1 < 0.0 {
            return bad(format!(
                "sigma1 = {} must be finite and nonnegative",
                self.sigma1
            ));
        }
        if let Some(support) = &self.true_support {
            let mut s = support.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != self.s_star || s.iter().any(|&j| j == 0 || j > self.num_groups) {
                return bad(format!(
                    "true_support must list {} distinct groups in 1..={}",
                    self.s_star, self.num_groups
                ));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.num_groups * self.group_size
    }

    pub fn structure_of_groups(&self) -> GroupStructure {
        let width = self.num_groups.to_string().len();
        let labels = (1..=self.num_groups)
            .map(|j| format!("g{j:0width$}"))
            .collect();
        GroupStructure::contiguous(self.num_groups, self.group_size)
            .and_then(|s| s.with_labels(labels))
            .expect("contiguous structure is valid")
    }

    pub fn column_names(&self) -> Vec<String> {
        let gw = self.num_groups.to_string().len();
        let kw = self.group_size.to_string().len();
        (1..=self.num_groups)
            .flat_map(|j| (1..=self.group_size).map(move |k| format!("x{j:0gw$}_{k:0kw$}")))
            .collect()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        // Well-formed JSON with the wrong fields is a bad spec, not a bad file.
        let spec: Self = serde_json::from_str(&text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => {
                SynthError::Spec(format!("{}: {e}", path.display()))
            }
            _ => SynthError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            },
        })?;
        spec.validate()?;
        Ok(spec)
    }

    fn streams(&self) -> SeedStream {
        SeedStream::new(self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// True group ids (0-based), sorted.
    pub true_support: Vec<usize>,
    pub beta_star: DVector<f64>,
    pub design_raw: DMatrix<f64>,
    pub response: DVector<f64>,
}

fn covariance(spec: &SyntheticSpec) -> DMatrix<f64> {
    let j = spec.num_groups;
    DMatrix::from_fn(j, j, |a, b| match spec.structure {
        _ if a == b => 1.0,
        Structure::Exponential => spec.rho.powi(a.abs_diff(b) as i32),
        Structure::Constant => spec.rho,
        Structure::Iid => 0.0,
    })
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major fill so the draw order matches the row-by-row definition.
    DMatrix::from_row_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)),
    )
}

/// `n × J` latent matrix with rows `N(0, Σ)`, via the Cholesky factor of `Σ`.
/// For the `iid` structure this is the full `n × p` design.
pub fn gen_latent(spec: &SyntheticSpec) -> Result<DMatrix<f64>, SynthError> {
    spec.validate()?;
    let mut rng = spec.streams().rng("latent");
    if spec.structure == Structure::Iid {
        return Ok(normal_matrix(&mut rng, spec.n, spec.p()));
    }
    let sigma = covariance(spec);
    let chol = sigma.cholesky().ok_or(SynthError::Cholesky {
        structure: spec.structure,
        rho: spec.rho,
        num_groups: spec.num_groups,
    })?;
    let z = normal_matrix(&mut rng, spec.n, spec.num_groups);
    Ok(z * chol.l().transpose())
}

/// Builds the `n × JK` design from latent columns; groups occupy contiguous columns.
pub fn gen_design(spec: &SyntheticSpec, latent: &DMatrix<f64>) -> DMatrix<f64> {
    if spec.structure == Structure::Iid {
        return latent.clone();
    }
    let k = spec.group_size;
    let mut rng = spec.streams().rng("noise_columns");
    let r = normal_matrix(&mut rng, spec.n, spec.p());
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(spec.n, spec.p(), |i, c| {
        (latent[(i, c / k)] + r[(i, c)]) * scale
    })
}

/// True support (0-based, sorted) and coefficients.
pub fn gen_beta(spec: &SyntheticSpec) -> (Vec<usize>, DVector<f64>) {
    let streams = spec.streams();
    let mut support: Vec<usize> = match &spec.true_support {
        Some(s) => s.iter().map(|&j| j - 1).collect(),
        None => sample(&mut streams.rng("support"), spec.num_groups, spec.s_star).into_vec(),
    };
    support.sort_unstable();

    let k = spec.group_size;
    let mut beta = DVector::zeros(spec.p());
    let mut rng = streams.rng("gamma");
    for &j in &support {
        match spec.fixed_coefficient {
            Some(value) => beta.rows_mut(j * k, k).fill(value),
            None => {
                let gamma: Vec<f64> = (0..=k).map(|_| rng.sample(StandardNormal)).collect();
                let mean = gamma.iter().sum::<f64>() / (k + 1) as f64;
                for i in 0..k {
                    beta[j * k + i] = gamma[i] - mean;
                }
            }
        }
    }
    (support, beta)
}

/// `y = X β* + ε` with `ε ~ N(0, σ₁²)` drawn from `rng`.
pub fn gen_response(
    design_raw: &DMatrix<f64>,
    beta_star: &DVector<f64>,
    sigma1: f64,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let mut y = design_raw * beta_star;
    if sigma1 > 0.0 {
        for v in y.iter_mut() {
            *v += sigma1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    y
}

/// Generates the full dataset for `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<GroundTruth, SynthError> {
    let latent = gen_latent(spec)?;
    let design_raw = gen_design(spec, &latent);
    let (true_support, beta_star) = gen_beta(spec);
    let response = gen_response(
        &design_raw,
        &beta_star,
        spec.sigma1,
        &mut spec.streams().rng("epsilon"),
    );
    Ok(GroundTruth {
        true_support,
        beta_star,
        design_raw,
        response,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(structure: Structure, rho: f64) -> SyntheticSpec {
        SyntheticSpec {
            n: 50,
            num_groups: 6,
            group_size: 3,
            rho,
            structure,
            sigma1: 1.0,
            s_star: 2,
            seed: 9,
            true_support: None,
            fixed_coefficient: None,
        }
    }

    fn corr(a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>) -> f64 {
        let (ma, mb) = (a.mean(), b.mean());
        let ca = a.add_scalar(-ma);
        let cb = b.add_scalar(-mb);
        ca.dot(&cb) / (ca.norm() * cb.norm())
    }

    #[test]
    fn covariance_structures() {
        let c = covariance(&spec(Structure::Constant, 0.6).clone_with_groups(3));
        assert_eq!(
            c,
            DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.6, 0.6, 1.0, 0.6, 0.6, 0.6, 1.0])
        );
        let e = covariance(&spec(Structure::Exponential, 0.5).clone_with_groups(3));
        assert_eq!(e[(0, 2)], 0.25);
        assert_eq!(
            covariance(&spec(Structure::Exponential, 0.0)),
            DMatrix::identity(6, 6)
        );
        assert_eq!(
            covariance(&spec(Structure::Constant, 0.0)),
            DMatrix::identity(6, 6)
        );
    }

    impl SyntheticSpec {
        fn clone_with_groups(&self, j: usize) -> Self {
            Self {
                num_groups: j,
                s_star: self.s_star.min(j),
                ..self.clone()
            }
        }
    }

    #[test]
    fn perfectly_correlated_constant_is_rejected() {
        let err = gen_latent(&spec(Structure::Constant, 1.0)).unwrap_err();
        assert!(matches!(err, SynthError::Cholesky { .. }));
    }

    #[test]
    fn exponential_lag_two_correlation() {
        let mut s = spec(Structure::Exponential, 0.9).clone_with_groups(3);
        s.n = 100_000;
        let latent = gen_latent(&s).unwrap();
        let r = corr(latent.column(0), latent.column(2));
        assert!((r - 0.81).abs() < 0.02, "corr = {r}");
    }

    #[test]
    fn design_moments() {
        let mut s = spec(Structure::Exponential, 0.0).clone_with_groups(2);
        s.group_size = 2;
        s.n = 100_000;
        let latent = gen_latent(&s).unwrap();
        let x = gen_design(&s, &latent);
        let col = x.column(0);
        let var = col.add_scalar(-col.mean()).norm_squared() / (s.n as f64 - 1.0);
        assert!((var - 1.0).abs() < 0.02, "var = {var}");
        let within = corr(x.column(0), x.column(1));
        assert!((within - 0.5).abs() < 0.02, "within = {within}");
        let across = corr(x.column(0), x.column(2));
        assert!(across.abs() < 0.02, "across = {across}");
    }

    #[test]
    fn beta_is_zero_off_support_and_reproducible() {
        let s = spec(Structure::Constant, 0.3);
        let (support, beta) = gen_beta(&s);
        assert_eq!(support.len(), 2);
        for j in 0..6 {
            let block = beta.rows(j * 3, 3);
            if support.contains(&j) {
                assert!(block.iter().any(|v| *v != 0.0));
            } else {
                assert!(block.iter().all(|v| *v == 0.0));
            }
        }
        assert_eq!(gen_beta(&s), (support, beta));
    }

    #[test]
    fn explicit_support_and_fixed_coefficient() {
        let mut s = spec(Structure::Iid, 0.0);
        s.true_support = Some(vec![2, 5]);
        s.fixed_coefficient = Some(2.0);
        let (support, beta) = gen_beta(&s);
        assert_eq!(support, vec![1, 4]);
        assert_eq!(beta.iter().filter(|v| **v == 2.0).count(), 6);
    }

    #[test]
    fn noiseless_response_is_exact() {
        let mut s = spec(Structure::Exponential, 0.5);
        s.sigma1 = 0.0;
        let truth = generate(&s).unwrap();
        assert_eq!(truth.response, &truth.design_raw * &truth.beta_star);
    }

    #[test]
    fn pure_noise_has_sigma_sd() {
        let x = DMatrix::zeros(100_000, 1);
        let beta = DVector::zeros(1);
        let mut rng = SeedStream::new(1).rng("epsilon");
        let y = gen_response(&x, &beta, 2.5, &mut rng);
        let sd = (y.add_scalar(-y.mean()).norm_squared() / (y.len() as f64 - 1.0)).sqrt();
        assert!((sd / 2.5 - 1.0).abs() < 0.02, "sd = {sd}");
    }

    #[test]
    fn noise_level_does_not_perturb_design() {
        let a = generate(&spec(Structure::Exponential, 0.6)).unwrap();
        let mut s = spec(Structure::Exponential, 0.6);
        s.sigma1 = 5.0;
        let b = generate(&s).unwrap();
        assert_eq!(a.design_raw, b.design_raw);
        assert_eq!(a.beta_star, b.beta_star);
        assert_ne!(a.response, b.response);
        let c = generate(&spec(Structure::Exponential, 0.6)).unwrap();
        assert_eq!(a.response, c.response);
    }

    #[test]
    fn spec_json_keys() {
        let json = r#"{"n":200,"J":200,"K":3,"rho":0,"structure":"iid","sigma1":1,"s_star":5,"seed":3,"fixed_coefficient":2}"#;
        let s: SyntheticSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.num_groups, 200);
        assert_eq!(s.group_size, 3);
        assert_eq!(s.structure, Structure::Iid);
        s.validate().unwrap();
        let back: SyntheticSpec =
            serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(Structure::Constant, 0.3);
        s.s_star = 7;
        assert!(s.validate().is_err());
        let mut s = spec(Structure::Constant, 1.5);
        s.s_star = 1;
        assert!(s.validate().is_err());
        let mut s = spec(Structure::Constant, 0.3);
        s.true_support = Some(vec![0, 1]);
        assert!(s.validate().is_err());
    }
}
