//! Data with `k` important components and `d - k` pure-noise components.
//!
//! Clean data is `X = L K Q^T` with all signal on the first `k` columns of
//! the shared eigenbasis `Q`. The corrupted copy adds independent
//! `N(0, Gamma)` rows, where `Gamma = Q diag(lambda_gamma) Q^T` vanishes on
//! the important directions.

mod benchmark;
pub mod io;

pub use benchmark::{build_corrupted_benchmark, build_corrupted_benchmark_from_embedding, build_corrupted_benchmark_from_projection, Benchmark, BenchmarkParams, PcaEmbedding};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentationModel;
use crate::error::{Error, Result};
use crate::rng::{orthonormal_columns, standard_normal_matrix, stream_rng};
use crate::spectral::{psd_sqrt, symmetrize};

/// Spectral description of a data model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSpec {
    pub n: usize,
    pub d: usize,
    /// Number of important components.
    pub k: usize,
    /// Per-sample data energies `kappa_i^2 / n` of the important components.
    pub c: Vec<f64>,
    pub lambda_theta: Vec<f64>,
    /// Zero on the first `k` entries, strictly positive afterwards.
    pub lambda_gamma: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SpectralSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::SpecInvalid(msg));
        if self.k == 0 || self.k >= self.d {
            return fail(format!("need 1 <= k < d, got k = {}, d = {}", self.k, self.d));
        }
        if self.n == 0 {
            return fail("n must be positive".into());
        }
        if self.c.len() != self.k {
            return fail(format!("c has {} entries, expected k = {}", self.c.len(), self.k));
        }
        if self.lambda_theta.len() != self.d || self.lambda_gamma.len() != self.d {
            return fail(format!(
                "spectra must have d = {} entries (lambda_theta: {}, lambda_gamma: {})",
                self.d,
                self.lambda_theta.len(),
                self.lambda_gamma.len()
            ));
        }
        if let Some(bad) = self.c.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return fail(format!("data energies must be finite and > 0, found {bad}"));
        }
        if self.c.windows(2).any(|w| w[0] < w[1]) {
            return fail("data energies must be sorted in non-increasing order".into());
        }
        if let Some(bad) = self.lambda_theta.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return fail(format!("lambda_theta entries must be finite and >= 0, found {bad}"));
        }
        for (i, &g) in self.lambda_gamma.iter().enumerate() {
            if !g.is_finite() {
                return fail(format!("lambda_gamma[{i}] is not finite"));
            }
            if i < self.k && g != 0.0 {
                return fail(format!("lambda_gamma[{i}] = {g} must be 0 on important components"));
            }
            if i >= self.k && g <= 0.0 {
                return fail(format!("lambda_gamma[{i}] = {g} must be > 0 on noise components"));
            }
        }
        Ok(())
    }

    pub fn noise_range(&self) -> std::ops::Range<usize> {
        self.k..self.d
    }

    /// Augmentation family in the basis `q` (identity when `q` is `None`).
    pub fn augmentation(&self, q: Option<&DMatrix<f64>>, alpha: f64) -> Result<AugmentationModel> {
        let theta = in_basis(q, &self.lambda_theta);
        let gamma = in_basis(q, &self.lambda_gamma);
        AugmentationModel::new(theta, gamma, alpha)
    }
}

/// `Q diag(values) Q^T`, or `diag(values)` without a basis.
pub(crate) fn in_basis(q: Option<&DMatrix<f64>>, values: &[f64]) -> DMatrix<f64> {
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(values));
    match q {
        Some(q) => symmetrize(&(q * diag * q.transpose())),
        None => diag,
    }
}

/// Clean and corrupted data sharing the eigenbasis `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataModel {
    pub spec: SpectralSpec,
    pub x_clean: DMatrix<f64>,
    pub x_corrupt: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Singular values of the clean data, zero beyond `k`.
    pub kappa: Vec<f64>,
    pub gamma: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub labels: Option<DMatrix<f64>>,
}

impl DataModel {
    pub fn n(&self) -> usize {
        self.x_clean.nrows()
    }

    pub fn d(&self) -> usize {
        self.x_clean.ncols()
    }

    pub fn important_basis(&self) -> DMatrix<f64> {
        self.q.columns(0, self.spec.k).into_owned()
    }

    pub fn noise_basis(&self) -> DMatrix<f64> {
        self.q.columns(self.spec.k, self.d() - self.spec.k).into_owned()
    }

    pub fn augmentation(&self, alpha: f64) -> Result<AugmentationModel> {
        AugmentationModel::new(self.theta.clone(), self.gamma.clone(), alpha)
    }
}

/// Adds independent `N(0, gamma)` rows to `x`.
pub fn corrupt<R: Rng + ?Sized>(x: &DMatrix<f64>, gamma: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    if gamma.nrows() != x.ncols() || !gamma.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "data is {}x{} but Gamma is {}x{}",
            x.nrows(),
            x.ncols(),
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    let root = psd_sqrt(gamma)?;
    let z = standard_normal_matrix(x.nrows(), x.ncols(), rng);
    Ok(x + z * root)
}

/// Synthetic data model built exactly from its spectrum.
///
/// `Q` is Haar-random, `L` has Haar-random orthonormal columns and
/// `X = sqrt(n) L_1 diag(sqrt(c)) Q_1^T`, so `X^T X / n` has eigenvalues
/// `c` on `Q_1` with no sampling error. Requires `n >= d`.
pub fn synth_dataset(spec: &SpectralSpec) -> Result<DataModel> {
    spec.validate()?;
    let (n, d, k) = (spec.n, spec.d, spec.k);
    if n < d {
        return Err(Error::SpecInvalid(format!("n = {n} < d = {d} is not supported by the generator")));
    }
    let q = orthonormal_columns(d, d, &mut stream_rng(spec.seed, &[0]));
    let l1 = orthonormal_columns(n, k, &mut stream_rng(spec.seed, &[1]));

    let nf = n as f64;
    let kappa: Vec<f64> = (0..d).map(|i| if i < k { (nf * spec.c[i]).sqrt() } else { 0.0 }).collect();
    let mut scaled = l1;
    for j in 0..k {
        scaled.column_mut(j).scale_mut(kappa[j]);
    }
    let x_clean = scaled * q.columns(0, k).transpose();

    let gamma = in_basis(Some(&q), &spec.lambda_gamma);
    let theta = in_basis(Some(&q), &spec.lambda_theta);
    let x_corrupt = corrupt(&x_clean, &gamma, &mut stream_rng(spec.seed, &[2]))?;
    Ok(DataModel { spec: spec.clone(), x_clean, x_corrupt, q, kappa, gamma, theta, labels: None })
}

/// Regression targets `Y = X_clean B^T` with Gaussian `B` (`ell x d`); they
/// depend on the important components only.
pub fn synth_labels(model: &DataModel, ell: usize, seed: u64) -> DMatrix<f64> {
    let b = standard_normal_matrix(ell, model.d(), &mut stream_rng(seed, &[3]));
    &model.x_clean * b.transpose()
}

/// One-hot encoding with `classes` columns.
pub fn one_hot(labels: &[usize], classes: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (i, &c) in labels.iter().enumerate() {
        y[(i, c)] = 1.0;
    }
    y
}

/// Draws `U(lo, hi]` without ever returning `lo`.
pub(crate) fn uniform_open_closed<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    hi - (hi - lo) * u
}
