//! Iterative solvers that optimize the training objectives directly.
//!
//! None of these use the spectral factorizations behind the closed forms;
//! they only evaluate objectives, gradients and the feasibility constraint,
//! so agreement with [`crate::solvers`] is an independent check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::augmentation::{analytic_moments, AugmentationModel, MomentPair};
use crate::datamodel::SpectralSpec;
use crate::error::{Error, Result};
use crate::rng::{standard_normal_matrix, stream_rng};
use crate::spectral::{power_iteration_max, row_space_distance, spd_inv_sqrt, sym_eig_raw, symmetrize, InvSqrtOptions, NORM_FLOOR};
use crate::theory::{consistency_predicate, Method};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub max_iters: usize,
    /// Initial step; `None` picks one from the curvature of the objective.
    pub step_size: Option<f64>,
    /// Relative stopping tolerance.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Views per sample and epoch for the supervised oracle.
    pub draws: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { max_iters: 200_000, step_size: None, tol: 1e-12, seed: 0, restarts: 3, draws: 64 }
    }
}

impl OracleOptions {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 || !(self.tol > 0.0) || self.step_size.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::SpecInvalid(format!("invalid oracle options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JeOracleFit {
    pub w: DMatrix<f64>,
    /// `tr(W G W^T)`.
    pub objective: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub restart: usize,
}

/// `(W S W^T)^{-1/2} W`, the closest feasible point along the row space.
fn retract(w: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = symmetrize(&(w * s * w.transpose()));
    Ok(spd_inv_sqrt(&gram, InvSqrtOptions::strict())? * w)
}

/// Solves `L B + B L = C` for symmetric `L`, with `B` symmetric positive definite.
fn lyapunov(b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig_raw(b)?;
    let u = &eig.basis;
    let mut inner = u.transpose() * c * u;
    for i in 0..inner.nrows() {
        for j in 0..inner.ncols() {
            inner[(i, j)] /= eig.values[i] + eig.values[j];
        }
    }
    Ok(symmetrize(&(u * inner * u.transpose())))
}

/// Gradient of `tr(W G W^T)` projected onto the tangent space of
/// `{W : W S W^T = I}`.
fn je_direction(w: &DMatrix<f64>, m: &MomentPair) -> Result<DMatrix<f64>> {
    let h = w * &m.g * 2.0;
    let ws = w * &m.s;
    let b = symmetrize(&(&ws * ws.transpose()));
    let c = &h * ws.transpose() + &ws * h.transpose();
    let lambda = lyapunov(&b, &c)?;
    Ok(h - lambda * ws)
}

/// Objective changes below this fraction are treated as rounding noise.
const FLAT_REL: f64 = 1e-13;

/// Maximizes `tr(W G W^T)` subject to `W S W^T = I_k` by projected gradient
/// ascent with a feasibility retraction after every step.
///
/// The step is halved whenever the objective would decrease and grown
/// after every accepted step.
pub fn oracle_joint_embedding(moments: &MomentPair, k: usize, opts: &OracleOptions) -> Result<JeOracleFit> {
    opts.validate()?;
    let d = moments.dim();
    if k == 0 || k > d {
        return Err(Error::RankOutOfRange { k, d });
    }
    let objective = |w: &DMatrix<f64>| (w * &moments.g * w.transpose()).trace();
    let g_max = power_iteration_max(&moments.g, 200).max(NORM_FLOOR);
    let initial_step = opts.step_size.unwrap_or(1.0 / (2.0 * g_max));

    let mut best: Option<JeOracleFit> = None;
    let mut first_error = None;
    for restart in 0..opts.restarts {
        let mut rng = stream_rng(opts.seed, &[restart as u64]);
        let mut w = retract(&standard_normal_matrix(k, d, &mut rng), &moments.s)?;
        let mut value = objective(&w);
        let mut step = initial_step;
        let mut outcome = None;
        let mut gradient_norm = f64::INFINITY;
        for iter in 0..opts.max_iters {
            let direction = je_direction(&w, moments)?;
            gradient_norm = direction.norm();
            let scale = value.abs().max(g_max * NORM_FLOOR.sqrt());
            if gradient_norm * w.norm() <= opts.tol * scale {
                outcome = Some(iter);
                break;
            }
            let mut accepted = false;
            while step * gradient_norm * w.norm() > 1e-18 * scale {
                let candidate = retract(&(&w + &direction * step), &moments.s)?;
                let candidate_value = objective(&candidate);
                // Near the optimum the objective is flat to rounding, but the
                // gradient still measures the distance; let it decide there.
                let improves = candidate_value > value
                    || (candidate_value >= value - FLAT_REL * scale
                        && je_direction(&candidate, moments)?.norm() < gradient_norm);
                if improves {
                    w = candidate;
                    value = candidate_value;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No representable step improves the objective: stationary to machine precision.
                outcome = Some(iter);
                break;
            }
        }
        match outcome {
            Some(iterations) => {
                let fit = JeOracleFit { w, objective: value, iterations, gradient_norm, restart };
                if best.as_ref().is_none_or(|b| fit.objective > b.objective) {
                    best = Some(fit);
                }
            }
            None => {
                first_error.get_or_insert(Error::NonConvergence { iterations: opts.max_iters, gradient_norm });
            }
        }
    }
    best.ok_or_else(|| first_error.expect("at least one restart ran"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RcOracleFit {
    pub encoder: DMatrix<f64>,
    pub decoder: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every half-step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn rc_objective(m: &MomentPair, e: &DMatrix<f64>, dec: &DMatrix<f64>) -> f64 {
    let p = dec * e;
    m.g.trace() - 2.0 * (&p * &m.g).trace() + (&p * &m.s * p.transpose()).trace()
}

fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    symmetrize(a)
        .cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::SingularSystem("normal equations are not positive definite".into()))
}

pub fn oracle_reconstruction(x: &DMatrix<f64>, sigma: &DMatrix<f64>, k: usize, opts: &OracleOptions) -> Result<RcOracleFit> {
    let model = AugmentationModel::new(sigma.clone(), DMatrix::zeros(sigma.nrows(), sigma.ncols()), 0.0)?;
    oracle_reconstruction_moments(&analytic_moments(&model, x)?, k, opts)
}

/// Minimizes `tr(G) - 2 tr(D E G) + tr(D E S E^T D^T)` by exact
/// alternating minimization over the decoder `D` and the encoder `E`.
///
/// Stops once the objective has stalled and the encoder row space moves
/// by at most `100 * tol` per sweep; the objective alone is flat in the
/// subspace error when the k-th singular gap is small.
pub fn oracle_reconstruction_moments(moments: &MomentPair, k: usize, opts: &OracleOptions) -> Result<RcOracleFit> {
    opts.validate()?;
    let d = moments.dim();
    if k == 0 || k > d {
        return Err(Error::RankOutOfRange { k, d });
    }
    let scale = moments.g.trace().abs().max(NORM_FLOOR);
    let mut best: Option<RcOracleFit> = None;
    let mut first_error = None;
    for restart in 0..opts.restarts {
        let mut rng = stream_rng(opts.seed, &[restart as u64]);
        let mut e = standard_normal_matrix(k, d, &mut rng);
        let mut dec = DMatrix::zeros(d, k);
        let mut history = Vec::new();
        let mut previous = f64::INFINITY;
        let mut outcome = None;
        for iter in 0..opts.max_iters {
            // D = G E^T (E S E^T)^{-1}
            let es = &e * &moments.s;
            let ese = &es * e.transpose();
            dec = solve_spd(&ese, &(&e * &moments.g))?.transpose();
            history.push(rc_objective(moments, &e, &dec));
            // E = (D^T D)^{-1} D^T G S^{-1}
            let rhs = dec.transpose() * &moments.g;
            let e_s = solve_spd(&(dec.transpose() * &dec), &rhs)?;
            let previous_e = e;
            e = solve_spd(&moments.s, &e_s.transpose())?.transpose();
            // Rebalance so that E S E^T = I; the product D E is unchanged.
            let ese = symmetrize(&(&e * &moments.s * e.transpose()));
            let eig = sym_eig_raw(&ese)?;
            e = eig.map_spectrum(|v| v.max(NORM_FLOOR).sqrt().recip()) * &e;
            dec = &dec * eig.map_spectrum(|v| v.max(0.0).sqrt());
            let value = rc_objective(moments, &e, &dec);
            history.push(value);
            if previous - value <= opts.tol * scale && row_space_distance(&previous_e, &e)? <= 100.0 * opts.tol {
                outcome = Some(iter + 1);
                break;
            }
            previous = value;
        }
        match outcome {
            Some(iterations) => {
                let objective = *history.last().expect("history is non-empty");
                let fit = RcOracleFit { encoder: e, decoder: dec, objective, iterations, history, restart };
                if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
                    best = Some(fit);
                }
            }
            None => {
                first_error.get_or_insert(Error::NonConvergence { iterations: opts.max_iters, gradient_norm: f64::NAN });
            }
        }
    }
    best.ok_or_else(|| first_error.expect("at least one restart ran"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedOracleFit {
    /// Polyak average over the second half of the epochs.
    pub v: DMatrix<f64>,
    pub last_iterate: DMatrix<f64>,
    pub epochs: usize,
}

/// Full-batch gradient descent on the Monte-Carlo augmented loss
/// `(1/n) sum_i mean_t ||y_i - V tau_t(x_i)||^2`, drawing fresh views every
/// epoch. Runs exactly `max_iters` epochs.
pub fn oracle_supervised(x: &DMatrix<f64>, y: &DMatrix<f64>, model: &AugmentationModel, opts: &OracleOptions) -> Result<SupervisedOracleFit> {
    opts.validate()?;
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if y.nrows() != n || model.dim() != d {
        return Err(Error::DimensionMismatch("X, Y and the augmentation disagree in shape".into()));
    }
    if opts.draws == 0 {
        return Err(Error::InsufficientSamples("zero views per epoch".into()));
    }
    let ell = y.ncols();
    let sampler = model.sampler()?;
    // Curvature of the expected loss: 2 (X^T X / n + Sigma).
    let s = analytic_moments(model, x)?.s;
    let step = opts.step_size.unwrap_or(1.0 / (2.0 * power_iteration_max(&s, 500).max(NORM_FLOOR)));

    let total = (n * opts.draws) as f64;
    let mut v = DMatrix::<f64>::zeros(ell, d);
    let mut average = DMatrix::<f64>::zeros(ell, d);
    let burn_in = opts.max_iters / 2;
    let mut view = DVector::zeros(d);
    for epoch in 0..opts.max_iters {
        let mut second = DMatrix::<f64>::zeros(d, d);
        let mut cross = DMatrix::<f64>::zeros(ell, d);
        for i in 0..n {
            let xi = x.row(i).transpose();
            let yi = y.row(i).transpose();
            let mut rng = stream_rng(opts.seed, &[epoch as u64, i as u64]);
            for _ in 0..opts.draws {
                sampler.sample_view_into(&xi, &mut rng, &mut view);
                second.ger(1.0, &view, &view, 1.0);
                cross.ger(1.0, &yi, &view, 1.0);
            }
        }
        let gradient = (&v * second - cross) * (2.0 / total);
        v -= gradient * step;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonConvergence { iterations: epoch + 1, gradient_norm: f64::INFINITY });
        }
        if epoch >= burn_in {
            let count = (epoch - burn_in + 1) as f64;
            average += (&v - &average) / count;
        }
    }
    Ok(SupervisedOracleFit { v: average, last_iterate: v, epochs: opts.max_iters })
}

/// Bisection tolerance on `alpha`.
pub const THRESHOLD_TOL: f64 = 1e-10;

/// Locates the alignment at which `method` becomes consistent by bisection
/// on [`consistency_predicate`].
pub fn threshold_search(method: Method, spec: &SpectralSpec, lo: f64, hi: f64) -> Result<f64> {
    let at = |alpha: f64| consistency_predicate(method, spec, alpha);
    if !(lo <= hi) || at(lo)? || !at(hi)? {
        return Err(Error::NoBracket { lo, hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
