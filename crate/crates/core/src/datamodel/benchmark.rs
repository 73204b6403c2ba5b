//! Real data embedded by PCA with appended pure-noise coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{corrupt, in_basis, one_hot, uniform_open_closed, DataModel, SpectralSpec};
use crate::augmentation::AugmentationModel;
use crate::error::{Error, Result};
use crate::rng::{orthonormal_columns, stream_rng};
use crate::spectral::{gram, sym_eig, symmetrize};

/// Centered projection onto the leading principal axes.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaEmbedding {
    pub mean: DVector<f64>,
    /// `p x dim`, orthonormal columns sorted by decreasing variance.
    pub components: DMatrix<f64>,
    pub variances: Vec<f64>,
}

impl PcaEmbedding {
    pub fn fit(raw: &DMatrix<f64>, dim: usize) -> Result<Self> {
        let (n, p) = raw.shape();
        if dim == 0 || dim > p {
            return Err(Error::DimensionMismatch(format!("PCA dimension {dim} must be in 1..={p}")));
        }
        if n <= dim {
            return Err(Error::InsufficientSamples(format!("{n} samples for a {dim}-dimensional PCA")));
        }
        let mean = column_mean(raw);
        let centered = center(raw, &mean);
        let cov = symmetrize(&(gram(&centered) / n as f64));
        let eig = sym_eig(&cov)?;
        Ok(PcaEmbedding { mean, components: eig.top(dim), variances: eig.values[..dim].to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn project(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "embedding expects {} features, data has {}",
                self.mean.len(),
                raw.ncols()
            )));
        }
        Ok(center(raw, &self.mean) * &self.components)
    }
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    x.row_mean().transpose()
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        row -= mean.transpose();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkParams {
    pub pca_dim: usize,
    pub noise_dims: usize,
    pub lambda_theta_max: f64,
    pub lambda_gamma_max: f64,
    /// Multiplies the embedded features; 255 restores raw pixel units for
    /// images ingested in `[0, 1]`.
    pub feature_scale: f64,
    pub seed: u64,
    /// Express everything in a Haar-random basis instead of the coordinate one.
    pub rotate: bool,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            pca_dim: 50,
            noise_dims: 50,
            lambda_theta_max: 1e4,
            lambda_gamma_max: 1e3,
            feature_scale: 1.0,
            seed: 0,
            rotate: false,
        }
    }
}

/// Lower end of the noise-eigenvalue range, keeping every draw strictly positive.
pub const LAMBDA_GAMMA_FLOOR_REL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub model: DataModel,
    pub params: BenchmarkParams,
    pub class_ids: Vec<usize>,
}

impl Benchmark {
    /// The augmentation family at strength `alpha`.
    pub fn augmentation(&self, alpha: f64) -> Result<AugmentationModel> {
        self.model.augmentation(alpha)
    }
}

/// Fits the PCA on `raw` itself, then builds the benchmark.
pub fn build_corrupted_benchmark(raw: &DMatrix<f64>, labels: &[usize], params: &BenchmarkParams) -> Result<Benchmark> {
    let embedding = PcaEmbedding::fit(raw, params.pca_dim)?;
    build_corrupted_benchmark_from_embedding(&embedding, raw, labels, params)
}

/// Builds the benchmark from a pre-fitted embedding, so that subsets of one
/// dataset share their principal subspace.
///
/// The embedded rows are re-centered and rotated within the subspace onto
/// their own principal axes, which makes `X^T X / n` diagonal with
/// decreasing entries `c`.
pub fn build_corrupted_benchmark_from_embedding(
    embedding: &PcaEmbedding,
    raw: &DMatrix<f64>,
    labels: &[usize],
    params: &BenchmarkParams,
) -> Result<Benchmark> {
    let k = embedding.dim();
    if k != params.pca_dim {
        return Err(Error::DimensionMismatch(format!("embedding has {k} components, params ask for {}", params.pca_dim)));
    }
    build_corrupted_benchmark_from_projection(&embedding.project(raw)?, labels, params)
}

/// As [`build_corrupted_benchmark_from_embedding`], for rows that were
/// already projected (`n x pca_dim`, before `feature_scale`).
pub fn build_corrupted_benchmark_from_projection(
    projected: &DMatrix<f64>,
    labels: &[usize],
    params: &BenchmarkParams,
) -> Result<Benchmark> {
    let (n, k) = projected.shape();
    if k != params.pca_dim {
        return Err(Error::DimensionMismatch(format!("projection has {k} columns, params ask for {}", params.pca_dim)));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} rows but {} labels", labels.len())));
    }
    if n <= k {
        return Err(Error::InsufficientSamples(format!("{n} samples for a {k}-dimensional PCA")));
    }
    if !(params.lambda_gamma_max.is_finite() && params.lambda_gamma_max > 0.0)
        || !(params.lambda_theta_max.is_finite() && params.lambda_theta_max >= 0.0)
        || !(params.feature_scale.is_finite() && params.feature_scale > 0.0)
    {
        return Err(Error::SpecInvalid("benchmark scales must be finite and positive".into()));
    }

    let mut z = projected * params.feature_scale;
    let mean = column_mean(&z);
    z = center(&z, &mean);
    let eig = sym_eig(&symmetrize(&(gram(&z) / n as f64)))?;
    let z = z * &eig.basis;
    let c: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();

    let d = k + params.noise_dims;
    let mut theta_rng = stream_rng(params.seed, &[10]);
    let lambda_theta: Vec<f64> = (0..d).map(|_| uniform_open_closed(0.0, params.lambda_theta_max, &mut theta_rng)).collect();
    let mut gamma_rng = stream_rng(params.seed, &[11]);
    let lo = LAMBDA_GAMMA_FLOOR_REL * params.lambda_gamma_max;
    let lambda_gamma: Vec<f64> = (0..d)
        .map(|i| if i < k { 0.0 } else { uniform_open_closed(lo, params.lambda_gamma_max, &mut gamma_rng) })
        .collect();

    let mut x_coord = DMatrix::zeros(n, d);
    x_coord.columns_mut(0, k).copy_from(&z);
    let gamma_coord = in_basis(None, &lambda_gamma);
    let corrupt_coord = corrupt(&x_coord, &gamma_coord, &mut stream_rng(params.seed, &[12]))?;

    let q = if params.rotate {
        orthonormal_columns(d, d, &mut stream_rng(params.seed, &[13]))
    } else {
        DMatrix::identity(d, d)
    };
    let (x_clean, x_corrupt) = if params.rotate {
        (&x_coord * q.transpose(), &corrupt_coord * q.transpose())
    } else {
        (x_coord, corrupt_coord)
    };

    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let nf = n as f64;
    let spec = SpectralSpec { n, d, k, c: c.clone(), lambda_theta: lambda_theta.clone(), lambda_gamma: lambda_gamma.clone(), seed: params.seed };
    if params.noise_dims > 0 {
        spec.validate()?;
    }
    let kappa = (0..d).map(|i| if i < k { (nf * c[i]).sqrt() } else { 0.0 }).collect();
    let model = DataModel {
        gamma: in_basis(Some(&q), &lambda_gamma),
        theta: in_basis(Some(&q), &lambda_theta),
        spec,
        x_clean,
        x_corrupt,
        q,
        kappa,
        labels: Some(one_hot(labels, classes)),
    };
    Ok(Benchmark { model, params: params.clone(), class_ids: labels.to_vec() })
}
