//! Closed-form minimizers of the supervised, reconstruction and
//! joint-embedding objectives under an augmentation covariance `Sigma`.
//!
//! All three reduce to spectral problems on the moments
//! `G = X^T X / n` and `S = G + Sigma`:
//!
//! * supervised: `V* = (Y^T X / n) S^{-1}`,
//! * reconstruction: with `G S^{-1/2} = R Phi P^T`, `E* = P_k^T S^{-1/2}` and
//!   `D* = R_k Phi_k`,
//! * joint embedding: with `S^{-1/2} G S^{-1/2} = Q Omega Q^T`,
//!   `W* = Q_k^T S^{-1/2}`.
//!
//! The free factors (`T` for reconstruction, `U` for joint embedding) are
//! fixed to the identity.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augmentation::{analytic_moments, AugmentationModel, MomentPair};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::spectral::{ensure_finite, second_moment, svd, sym_eig, sym_eig_raw, symmetrize, EigenPair, NORM_FLOOR};

/// Eigenvalues of `S` at or below this fraction of the largest make it singular.
pub const SINGULAR_REL: f64 = 1e-15;

/// Condition number above which strict mode rejects `S`.
pub const MAX_CONDITION: f64 = 1e12;

/// Ridge jitter `JITTER_REL * trace(S) / d` added when `jitter` is enabled.
pub const JITTER_REL: f64 = 1e-10;

/// Relative spectral gap below which the selected subspace is not unique.
pub const GAP_REL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Reject ill-conditioned `S` (condition number above [`MAX_CONDITION`]).
    pub strict: bool,
    /// Add a small ridge to singular or ill-conditioned `S` instead of failing.
    pub jitter: bool,
}

impl SolveOptions {
    pub fn strict() -> Self {
        SolveOptions { strict: true, jitter: false }
    }

    pub fn jittered() -> Self {
        SolveOptions { strict: false, jitter: true }
    }
}

/// Eigendecomposition of `S` after the conditioning checks.
struct Conditioned {
    eig: EigenPair,
    jittered: bool,
}

impl Conditioned {
    fn new(s: &DMatrix<f64>, opts: SolveOptions, what: &str) -> Result<Self> {
        ensure_finite(s)?;
        let eig = sym_eig_raw(s)?;
        let largest = eig.values.first().copied().unwrap_or(0.0);
        let smallest = eig.values.last().copied().unwrap_or(0.0);
        let singular = largest <= NORM_FLOOR || smallest <= SINGULAR_REL * largest;
        let ill = smallest <= 0.0 || largest / smallest > MAX_CONDITION;
        if !(singular || (opts.strict && ill)) {
            return Ok(Conditioned { eig, jittered: false });
        }
        if opts.jitter && largest > NORM_FLOOR {
            let d = s.nrows() as f64;
            let eps = JITTER_REL * s.trace() / d;
            log::warn!("{what}: adding ridge jitter {eps:.3e} (eigenvalues in [{smallest:.3e}, {largest:.3e}])");
            let shifted = s + DMatrix::<f64>::identity(s.nrows(), s.nrows()) * eps;
            return Ok(Conditioned { eig: sym_eig_raw(&shifted)?, jittered: true });
        }
        Err(Error::SingularSystem(format!(
            "{what}: eigenvalues in [{smallest:.3e}, {largest:.3e}] (condition limit {MAX_CONDITION:.0e})"
        )))
    }

    fn inv_sqrt(&self) -> DMatrix<f64> {
        self.eig.map_spectrum(|v| v.sqrt().recip())
    }

    fn inverse(&self) -> DMatrix<f64> {
        self.eig.map_spectrum(f64::recip)
    }
}

fn check_rank(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::RankOutOfRange { k, d });
    }
    Ok(())
}

fn gap_is_degenerate(values: &[f64], k: usize, scale: f64) -> bool {
    k < values.len() && values[k - 1] - values[k] < GAP_REL * scale
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedSolution {
    /// `ell x d`.
    pub v: DMatrix<f64>,
    pub jittered: bool,
}

/// Ridge-form minimizer of the augmented supervised risk.
pub fn solve_supervised(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<SupervisedSolution> {
    solve_supervised_with(x, y, sigma, SolveOptions::default())
}

pub fn solve_supervised_with(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    opts: SolveOptions,
) -> Result<SupervisedSolution> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if y.nrows() != n || sigma.shape() != (x.ncols(), x.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "X is {}x{}, Y is {}x{}, Sigma is {}x{}",
            n,
            x.ncols(),
            y.nrows(),
            y.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let cross = y.transpose() * x / n as f64;
    let s = symmetrize(&(second_moment(x) + sigma));
    solve_supervised_moments(&cross, &s, opts)
}

/// `V* = cross S^{-1}` given `cross = Y^T X / n` and `S = G + Sigma`.
pub fn solve_supervised_moments(cross: &DMatrix<f64>, s: &DMatrix<f64>, opts: SolveOptions) -> Result<SupervisedSolution> {
    if cross.ncols() != s.nrows() {
        return Err(Error::DimensionMismatch(format!("cross moment has {} columns, S is {}x{}", cross.ncols(), s.nrows(), s.ncols())));
    }
    let cond = Conditioned::new(s, opts, "supervised")?;
    Ok(SupervisedSolution { v: cross * cond.inverse(), jittered: cond.jittered })
}

/// `||V||_Sigma^2 + (1/n) sum_i ||y_i - V x_i||^2`.
pub fn augmented_risk(x: &DMatrix<f64>, y: &DMatrix<f64>, v: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let penalty = (v * sigma * v.transpose()).trace();
    let residual = y - x * v.transpose();
    penalty + residual.norm_squared() / x.nrows() as f64
}

/// Outcome of [`ridge_equivalence_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeCheck {
    /// Monte-Carlo estimate of the augmented empirical risk.
    pub mc_loss: f64,
    /// Closed-form ridge expression of the same risk.
    pub ridge_loss: f64,
    /// Standard error of `mc_loss`.
    pub se: f64,
}

impl RidgeCheck {
    pub fn z_score(&self) -> f64 {
        let diff = (self.mc_loss - self.ridge_loss).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.se.max(NORM_FLOOR)
        }
    }
}

/// Compares the Monte-Carlo augmented risk of `v` with its ridge form.
///
/// Each sample gets `draws` views from its own random stream, so the
/// result depends only on `seed`. At least 100 draws are recommended.
pub fn ridge_equivalence_check(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    v: &DMatrix<f64>,
    model: &AugmentationModel,
    draws: usize,
    seed: u64,
) -> Result<RidgeCheck> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if draws < 2 {
        return Err(Error::InsufficientSamples(format!("{draws} draws per sample")));
    }
    if y.nrows() != n || v.ncols() != d || v.nrows() != y.ncols() || model.dim() != d {
        return Err(Error::DimensionMismatch("X, Y, V and the augmentation disagree in shape".into()));
    }
    let sampler = model.sampler()?;
    let mut view = DVector::zeros(d);
    let mut total = 0.0;
    let mut variance = 0.0;
    for i in 0..n {
        let xi = x.row(i).transpose();
        let yi = y.row(i).transpose();
        let mut rng = stream_rng(seed, &[i as u64]);
        let (mut mean, mut m2) = (0.0, 0.0);
        for t in 0..draws {
            sampler.sample_view_into(&xi, &mut rng, &mut view);
            let loss = (&yi - v * &view).norm_squared();
            let delta = loss - mean;
            mean += delta / (t + 1) as f64;
            m2 += delta * (loss - mean);
        }
        total += mean;
        variance += m2 / (draws - 1) as f64 / draws as f64;
    }
    let nf = n as f64;
    Ok(RidgeCheck {
        mc_loss: total / nf,
        ridge_loss: augmented_risk(x, y, v, &model.covariance()),
        se: variance.sqrt() / nf,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RCSolution {
    /// `k x d`.
    pub encoder: DMatrix<f64>,
    /// `d x k`.
    pub decoder: DMatrix<f64>,
    /// The free invertible factor, always the identity here.
    pub mixing: DMatrix<f64>,
    pub singulars: Vec<f64>,
    /// `P_k`, `d x k`.
    pub right_basis: DMatrix<f64>,
    /// `R_k`, `d x k`.
    pub left_basis: DMatrix<f64>,
    pub degenerate_gap: bool,
    pub jittered: bool,
}

impl RCSolution {
    pub fn k(&self) -> usize {
        self.encoder.nrows()
    }

    /// `D* E*`.
    pub fn product(&self) -> DMatrix<f64> {
        &self.decoder * &self.encoder
    }
}

pub fn solve_reconstruction(x: &DMatrix<f64>, sigma: &DMatrix<f64>, k: usize) -> Result<RCSolution> {
    solve_reconstruction_with(x, sigma, k, SolveOptions::default())
}

pub fn solve_reconstruction_with(x: &DMatrix<f64>, sigma: &DMatrix<f64>, k: usize, opts: SolveOptions) -> Result<RCSolution> {
    let model = AugmentationModel::new(sigma.clone(), DMatrix::zeros(sigma.nrows(), sigma.ncols()), 0.0)?;
    let moments = analytic_moments(&model, x)?;
    solve_reconstruction_moments(&moments, k, opts)
}

/// Reconstruction solution from `G = X^T X / n` and `S = G + Sigma`.
pub fn solve_reconstruction_moments(moments: &MomentPair, k: usize, opts: SolveOptions) -> Result<RCSolution> {
    let d = moments.dim();
    check_rank(k, d)?;
    let cond = Conditioned::new(&moments.s, opts, "reconstruction")?;
    let s_inv_sqrt = cond.inv_sqrt();
    let a = &moments.g * &s_inv_sqrt;
    let triple = svd(&a)?;
    let scale = triple.singulars.first().copied().unwrap_or(0.0);
    let degenerate_gap = gap_is_degenerate(&triple.singulars, k, scale);
    if degenerate_gap {
        log::warn!(
            "reconstruction: singular values {} and {} are not separated, the rank-{k} truncation is not unique",
            triple.singulars[k - 1],
            triple.singulars[k]
        );
    }
    let top = triple.truncate(k);
    let encoder = top.right.transpose() * &s_inv_sqrt;
    let decoder = DMatrix::from_fn(d, k, |i, j| top.left[(i, j)] * top.singulars[j]);
    Ok(RCSolution {
        encoder,
        decoder,
        mixing: DMatrix::identity(k, k),
        singulars: top.singulars,
        right_basis: top.right,
        left_basis: top.left,
        degenerate_gap,
        jittered: cond.jittered,
    })
}

/// Ridge form of the augmented reconstruction risk,
/// `tr(G) - 2 tr(D E G) + tr(D E S E^T D^T)`.
pub fn reconstruction_objective(moments: &MomentPair, encoder: &DMatrix<f64>, decoder: &DMatrix<f64>) -> f64 {
    let m = decoder * encoder;
    moments.g.trace() - 2.0 * (&m * &moments.g).trace() + (&m * &moments.s * m.transpose()).trace()
}

#[derive(Clone, Debug, PartialEq)]
pub struct JESolution {
    /// `k x d`.
    pub w: DMatrix<f64>,
    /// The free orthogonal factor, always the identity here.
    pub rotation: DMatrix<f64>,
    /// `Q_k`, `d x k`.
    pub basis: DMatrix<f64>,
    /// Top `k` eigenvalues of `S^{-1/2} G S^{-1/2}`.
    pub eigvals: Vec<f64>,
    pub degenerate_gap: bool,
    pub jittered: bool,
}

impl JESolution {
    pub fn k(&self) -> usize {
        self.w.nrows()
    }
}

pub fn solve_joint_embedding(moments: &MomentPair, k: usize) -> Result<JESolution> {
    solve_joint_embedding_with(moments, k, SolveOptions::default())
}

pub fn solve_joint_embedding_with(moments: &MomentPair, k: usize, opts: SolveOptions) -> Result<JESolution> {
    let d = moments.dim();
    check_rank(k, d)?;
    let cond = Conditioned::new(&moments.s, opts, "joint embedding")?;
    let s_inv_sqrt = cond.inv_sqrt();
    let whitened = symmetrize(&(&s_inv_sqrt * &moments.g * &s_inv_sqrt));
    let eig = sym_eig(&whitened)?;
    let scale = eig.values.first().copied().unwrap_or(0.0).max(1.0);
    let degenerate_gap = gap_is_degenerate(&eig.values, k, scale);
    if degenerate_gap {
        log::warn!(
            "joint embedding: eigenvalues {} and {} are not separated, the top-{k} subspace is not unique",
            eig.values[k - 1],
            eig.values[k]
        );
    }
    let basis = eig.top(k);
    Ok(JESolution {
        w: basis.transpose() * s_inv_sqrt,
        rotation: DMatrix::identity(k, k),
        basis,
        eigvals: eig.values[..k].to_vec(),
        degenerate_gap,
        jittered: cond.jittered,
    })
}

/// Expected squared distance between two views' embeddings,
/// `2 tr(W (S - G) W^T)`.
pub fn invariance_objective(moments: &MomentPair, w: &DMatrix<f64>) -> f64 {
    2.0 * (w * (&moments.s - &moments.g) * w.transpose()).trace()
}

/// `tr(W G W^T)`, maximized by the joint-embedding solution.
pub fn attraction(moments: &MomentPair, w: &DMatrix<f64>) -> f64 {
    (w * &moments.g * w.transpose()).trace()
}

/// `||W S W^T - I||_F`.
pub fn feasibility_defect(moments: &MomentPair, w: &DMatrix<f64>) -> f64 {
    let k = w.nrows();
    (w * &moments.s * w.transpose() - DMatrix::<f64>::identity(k, k)).norm()
}

/// Random perturbation direction of unit Frobenius norm.
pub fn random_direction<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let m = crate::rng::standard_normal_matrix(rows, cols, rng);
    let norm = m.norm().max(NORM_FLOOR);
    m / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{orthonormal_columns, standard_normal_matrix};
    use crate::spectral::{row_space_basis, subspace_distance};
    use approx::assert_relative_eq;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(values))
    }

    fn random_spd(d: usize, seed: u64) -> DMatrix<f64> {
        let a = standard_normal_matrix(d, d, &mut stream_rng(seed, &[1]));
        &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1
    }

    fn moments(g: DMatrix<f64>, sigma: DMatrix<f64>) -> MomentPair {
        MomentPair { s: &g + sigma, g }
    }

    #[test]
    fn scalar_supervised_example() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let sol = solve_supervised(&x, &x, &diag(&[1.0])).unwrap();
        assert_relative_eq!(sol.v[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unregularized_supervised_is_least_squares() {
        let x = standard_normal_matrix(20, 4, &mut stream_rng(1, &[]));
        let y = standard_normal_matrix(20, 2, &mut stream_rng(2, &[]));
        let v = solve_supervised(&x, &y, &DMatrix::zeros(4, 4)).unwrap().v;
        let residual = &y - &x * v.transpose();
        assert!((x.transpose() * residual).amax() < 1e-9);
    }

    #[test]
    fn supervised_first_order_condition_and_local_optimality() {
        let (n, d, ell) = (15, 5, 3);
        let x = standard_normal_matrix(n, d, &mut stream_rng(3, &[]));
        let y = standard_normal_matrix(n, ell, &mut stream_rng(4, &[]));
        let sigma = random_spd(d, 5);
        let v = solve_supervised(&x, &y, &sigma).unwrap().v;
        let grad = (&x * v.transpose() - &y).transpose() * &x / n as f64 + &v * &sigma;
        assert!(grad.norm() < 1e-8 * (v.norm() + 1.0));

        let best = augmented_risk(&x, &y, &v, &sigma);
        let mut rng = stream_rng(6, &[]);
        for _ in 0..10_000 {
            let radius: f64 = 1e-3 * rng.random::<f64>();
            let perturbed = &v + random_direction(ell, d, &mut rng) * radius;
            assert!(best <= augmented_risk(&x, &y, &perturbed, &sigma) + 1e-15);
        }
    }

    #[test]
    fn singular_supervised_system_is_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(solve_supervised(&x, &y, &DMatrix::zeros(2, 2)), Err(Error::SingularSystem(_))));
        let sol = solve_supervised_with(&x, &y, &DMatrix::zeros(2, 2), SolveOptions::jittered()).unwrap();
        assert!(sol.jittered && sol.v.iter().all(|v| v.is_finite()));
        let ill = diag(&[1.0, 1e-13]);
        assert!(solve_supervised_moments(&DMatrix::zeros(1, 2), &ill, SolveOptions::default()).is_ok());
        assert!(matches!(solve_supervised_moments(&DMatrix::zeros(1, 2), &ill, SolveOptions::strict()), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn ridge_check_exact_cases() {
        let x = standard_normal_matrix(6, 3, &mut stream_rng(7, &[]));
        let y = standard_normal_matrix(6, 2, &mut stream_rng(8, &[]));
        let v = standard_normal_matrix(2, 3, &mut stream_rng(9, &[]));
        let check = ridge_equivalence_check(&x, &y, &v, &AugmentationModel::none(3), 100, 1).unwrap();
        assert_relative_eq!(check.mc_loss, check.ridge_loss, max_relative = 1e-13);
        assert_eq!(check.se, 0.0);

        let model = AugmentationModel::diagonal(&[1.0, 0.5, 0.2], &[0.0, 1.0, 2.0], 1.5).unwrap();
        let zero = ridge_equivalence_check(&x, &y, &DMatrix::zeros(2, 3), &model, 100, 1).unwrap();
        let energy = y.norm_squared() / 6.0;
        assert_relative_eq!(zero.mc_loss, energy, max_relative = 1e-13);
        assert_relative_eq!(zero.ridge_loss, energy, max_relative = 1e-13);
    }

    #[test]
    fn ridge_check_monte_carlo_agreement() {
        let x = standard_normal_matrix(5, 3, &mut stream_rng(10, &[]));
        let y = standard_normal_matrix(5, 2, &mut stream_rng(11, &[]));
        let v = standard_normal_matrix(2, 3, &mut stream_rng(12, &[]));
        let model = AugmentationModel::diagonal(&[0.5, 0.3, 0.1], &[0.0, 1.0, 0.4], 0.8).unwrap();
        let check = ridge_equivalence_check(&x, &y, &v, &model, 100_000, 13).unwrap();
        assert!(check.z_score() <= 4.0, "{check:?}");
        assert!(check.se > 0.0);
    }

    #[test]
    fn reconstruction_hand_example() {
        let m = moments(diag(&[2.0, 0.0]), DMatrix::identity(2, 2));
        let sol = solve_reconstruction_moments(&m, 1, SolveOptions::default()).unwrap();
        let s3 = 3f64.sqrt();
        assert_relative_eq!(sol.encoder, DMatrix::from_row_slice(1, 2, &[1.0 / s3, 0.0]), epsilon = 1e-14);
        assert_relative_eq!(sol.decoder, DMatrix::from_row_slice(2, 1, &[2.0 / s3, 0.0]), epsilon = 1e-14);
        assert_relative_eq!(sol.product(), diag(&[2.0 / 3.0, 0.0]), epsilon = 1e-14);
        assert_relative_eq!(sol.singulars[0], 2.0 / s3, epsilon = 1e-14);
    }

    #[test]
    fn unregularized_full_rank_reconstruction_is_identity() {
        let x = standard_normal_matrix(12, 4, &mut stream_rng(14, &[]));
        let sol = solve_reconstruction(&x, &DMatrix::zeros(4, 4), 4).unwrap();
        assert!((sol.product() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);
        assert!(matches!(solve_reconstruction(&x, &DMatrix::zeros(4, 4), 5), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn reconstruction_product_invariant() {
        let g = random_spd(6, 15);
        let m = moments(g, random_spd(6, 16));
        let sol = solve_reconstruction_moments(&m, 3, SolveOptions::default()).unwrap();
        let s_inv_sqrt = crate::spectral::spd_inv_sqrt(&m.s, Default::default()).unwrap();
        let expected = &sol.left_basis * diag(&sol.singulars) * sol.right_basis.transpose() * s_inv_sqrt;
        assert!((sol.product() - &expected).norm() <= 1e-8 * expected.norm());
    }

    #[test]
    fn joint_embedding_hand_example() {
        let m = moments(diag(&[2.0, 0.0]), DMatrix::identity(2, 2));
        let sol = solve_joint_embedding(&m, 1).unwrap();
        assert_relative_eq!(sol.w, DMatrix::from_row_slice(1, 2, &[3f64.sqrt().recip(), 0.0]), epsilon = 1e-14);
        assert_relative_eq!(sol.eigvals[0], 2.0 / 3.0, epsilon = 1e-14);
        assert!(feasibility_defect(&m, &sol.w) < 1e-14);
        assert!(!sol.degenerate_gap);
    }

    #[test]
    fn zero_attraction_is_flagged() {
        let m = moments(DMatrix::zeros(3, 3), diag(&[1.0, 2.0, 3.0]));
        let sol = solve_joint_embedding(&m, 2).unwrap();
        assert!(sol.degenerate_gap);
        assert!(feasibility_defect(&m, &sol.w) < 1e-12);
        let again = solve_joint_embedding(&m, 2).unwrap();
        assert_eq!(sol, again);
    }

    #[test]
    fn joint_embedding_spans_whitened_top_eigenspace() {
        let g = random_spd(7, 17);
        let m = moments(g, random_spd(7, 18));
        let sol = solve_joint_embedding(&m, 3).unwrap();
        assert!(feasibility_defect(&m, &sol.w) < 1e-8);
        let s_inv_sqrt = crate::spectral::spd_inv_sqrt(&m.s, Default::default()).unwrap();
        let expected = row_space_basis(&(sol.basis.transpose() * &s_inv_sqrt)).unwrap();
        let got = row_space_basis(&sol.w).unwrap();
        assert!(subspace_distance(&got, &expected).unwrap() < 1e-8);
        assert_relative_eq!(attraction(&m, &sol.w), sol.eigvals.iter().sum::<f64>(), max_relative = 1e-10);
        assert_relative_eq!(invariance_objective(&m, &sol.w), 2.0 * (3.0 - sol.eigvals.iter().sum::<f64>()), max_relative = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn solution_classes_share_objectives(seed in any::<u64>(), d in 3usize..8, k_frac in 0.0f64..1.0) {
            let k = 1 + ((d - 1) as f64 * k_frac) as usize;
            let m = moments(random_spd(d, seed), random_spd(d, seed ^ 0xabc));

            let rc = solve_reconstruction_moments(&m, k, SolveOptions::default()).unwrap();
            let t = standard_normal_matrix(k, k, &mut stream_rng(seed, &[2])) + DMatrix::identity(k, k) * 3.0;
            let t_inv = t.clone().try_inverse().unwrap();
            let base = reconstruction_objective(&m, &rc.encoder, &rc.decoder);
            let mixed = reconstruction_objective(&m, &(&t * &rc.encoder), &(&rc.decoder * &t_inv));
            prop_assert!((base - mixed).abs() <= 1e-9 * base.abs().max(1.0));

            let je = solve_joint_embedding(&m, k).unwrap();
            let u = orthonormal_columns(k, k, &mut stream_rng(seed, &[3]));
            let rotated = &u * &je.w;
            prop_assert!(feasibility_defect(&m, &rotated) < 1e-9);
            let a = invariance_objective(&m, &je.w);
            let b = invariance_objective(&m, &rotated);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
