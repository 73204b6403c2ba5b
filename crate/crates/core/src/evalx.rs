//! Linear probing of learned representations.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::solvers::{JESolution, RCSolution, SupervisedSolution};
use crate::spectral::{sym_eig_raw, NORM_FLOOR};

/// Anything that maps inputs linearly to representations `z = M x`.
pub trait Encoder {
    /// The `k x d` matrix `M`.
    fn encoder_matrix(&self) -> &DMatrix<f64>;
}

impl Encoder for JESolution {
    fn encoder_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

impl Encoder for RCSolution {
    fn encoder_matrix(&self) -> &DMatrix<f64> {
        &self.encoder
    }
}

impl Encoder for SupervisedSolution {
    fn encoder_matrix(&self) -> &DMatrix<f64> {
        &self.v
    }
}

impl Encoder for DMatrix<f64> {
    fn encoder_matrix(&self) -> &DMatrix<f64> {
        self
    }
}

/// `Z = X M^T`, one representation per row.
pub fn represent<E: Encoder + ?Sized>(encoder: &E, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = encoder.encoder_matrix();
    if m.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch(format!("encoder takes {} inputs, data has {}", m.ncols(), x.ncols())));
    }
    Ok(x * m.transpose())
}

/// Eigenvalues of the normalized Gram matrix below this are dropped.
pub const PINV_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    /// Ridge penalty on the probe weights (off by default).
    pub ridge: Option<f64>,
    /// Fraction of rows held out for an additional out-of-sample loss.
    pub holdout: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    /// `ell x k`.
    pub weights: DMatrix<f64>,
    /// Mean squared error on the fitting rows.
    pub loss: f64,
    pub holdout_loss: Option<f64>,
    /// The Gram matrix was rank deficient and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
    pub rank: usize,
}

/// Least-squares probe without intercept, fitted in-sample.
pub fn fit_probe(z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProbeResult> {
    fit_probe_with(z, y, &ProbeOptions::default())
}

pub fn fit_probe_with(z: &DMatrix<f64>, y: &DMatrix<f64>, opts: &ProbeOptions) -> Result<ProbeResult> {
    if z.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!("{} representations but {} targets", z.nrows(), y.nrows())));
    }
    if z.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    let Some(fraction) = opts.holdout else {
        return least_squares(z, y, opts.ridge);
    };
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::SpecInvalid(format!("holdout fraction {fraction} not in (0, 1)")));
    }
    let n = z.nrows();
    let held = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    if held >= n {
        return Err(Error::InsufficientSamples(format!("{n} rows cannot be split")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(opts.seed, &[0x686f_6c64]));
    let (test, train) = order.split_at(held);
    let pick = |m: &DMatrix<f64>, rows: &[usize]| m.select_rows(rows.iter());
    let mut result = least_squares(&pick(z, train), &pick(y, train), opts.ridge)?;
    let residual = pick(y, test) - pick(z, test) * result.weights.transpose();
    result.holdout_loss = Some(residual.norm_squared() / held as f64);
    Ok(result)
}

fn least_squares(z: &DMatrix<f64>, y: &DMatrix<f64>, ridge: Option<f64>) -> Result<ProbeResult> {
    let (n, k) = z.shape();
    // Column equilibration keeps the Gram matrix well scaled; the fitted
    // predictions do not depend on it.
    let norms: Vec<f64> = z.column_iter().map(|c| c.norm()).collect();
    let mut zs = z.clone();
    for (j, &norm) in norms.iter().enumerate() {
        if norm > NORM_FLOOR {
            zs.column_mut(j).unscale_mut(norm);
        }
    }
    let mut gram = zs.transpose() * &zs;
    if let Some(lambda) = ridge {
        // The penalty acts on the original weights: lambda n ||V||^2.
        for j in 0..k {
            let scale = norms[j].max(NORM_FLOOR);
            gram[(j, j)] += lambda * n as f64 / (scale * scale);
        }
    }
    let eig = sym_eig_raw(&((&gram + gram.transpose()) * 0.5))?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(NORM_FLOOR);
    let rank = eig.values.iter().filter(|&&v| v > PINV_REL * top).count();
    let pinv = eig.map_spectrum(|v| if v > PINV_REL * top { v.recip() } else { 0.0 });
    let scaled_weights = (pinv * zs.transpose() * y).transpose();
    let mut weights = scaled_weights;
    for (j, &norm) in norms.iter().enumerate() {
        if norm > NORM_FLOOR {
            weights.column_mut(j).unscale_mut(norm);
        } else {
            weights.column_mut(j).fill(0.0);
        }
    }
    let residual = y - z * weights.transpose();
    Ok(ProbeResult { loss: residual.norm_squared() / n as f64, weights, holdout_loss: None, pseudo_inverse: rank < k, rank })
}

/// `|probe loss on clean representations - probe loss on corrupted ones|`.
pub fn probe_gap(clean: &DMatrix<f64>, corrupted: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if clean.shape() != corrupted.shape() {
        return Err(Error::DimensionMismatch(format!(
            "representations have shapes {:?} and {:?}",
            clean.shape(),
            corrupted.shape()
        )));
    }
    Ok((fit_probe(clean, y)?.loss - fit_probe(corrupted, y)?.loss).abs())
}
