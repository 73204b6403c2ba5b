//! Gaussian augmentation family `tau(x) = x + theta + alpha * gamma` with
//! `theta ~ N(0, Theta)` and `gamma ~ N(0, Gamma)` drawn independently per view.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{standard_normal_vector, stream_rng};
use crate::spectral::{ensure_psd, psd_sqrt, second_moment};

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationModel {
    theta: DMatrix<f64>,
    gamma: DMatrix<f64>,
    alpha: f64,
}

impl AugmentationModel {
    pub fn new(theta: DMatrix<f64>, gamma: DMatrix<f64>, alpha: f64) -> Result<Self> {
        if theta.shape() != gamma.shape() || !theta.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Theta is {:?} but Gamma is {:?}",
                theta.shape(),
                gamma.shape()
            )));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::SpecInvalid(format!("alignment must be finite and >= 0, got {alpha}")));
        }
        ensure_psd(&theta)?;
        ensure_psd(&gamma)?;
        Ok(AugmentationModel { theta, gamma, alpha })
    }

    /// Diagonal covariances in the standard basis.
    pub fn diagonal(lambda_theta: &[f64], lambda_gamma: &[f64], alpha: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(lambda_theta)),
            DMatrix::from_diagonal(&DVector::from_column_slice(lambda_gamma)),
            alpha,
        )
    }

    /// The identity augmentation in dimension `d`.
    pub fn none(d: usize) -> Self {
        AugmentationModel { theta: DMatrix::zeros(d, d), gamma: DMatrix::zeros(d, d), alpha: 0.0 }
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.theta.clone(), self.gamma.clone(), alpha)
    }

    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `Theta + alpha^2 Gamma`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.theta + &self.gamma * (self.alpha * self.alpha)
    }

    /// Precomputes the matrix square roots used to draw views.
    pub fn sampler(&self) -> Result<ViewSampler> {
        Ok(ViewSampler {
            theta_root: psd_sqrt(&self.theta)?,
            gamma_root: psd_sqrt(&self.gamma)?,
            alpha: self.alpha,
        })
    }
}

/// Augmentation covariance of the family, `Theta + alpha^2 Gamma`.
pub fn aug_covariance(model: &AugmentationModel) -> DMatrix<f64> {
    model.covariance()
}

/// Draws augmented views; holds `Theta^{1/2}` and `Gamma^{1/2}`.
#[derive(Clone, Debug)]
pub struct ViewSampler {
    theta_root: DMatrix<f64>,
    gamma_root: DMatrix<f64>,
    alpha: f64,
}

impl ViewSampler {
    pub fn dim(&self) -> usize {
        self.theta_root.nrows()
    }

    pub fn sample_view<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let z_theta = standard_normal_vector(d, rng);
        let z_gamma = standard_normal_vector(d, rng);
        let mut view = x + &self.theta_root * z_theta;
        view.gemv(self.alpha, &self.gamma_root, &z_gamma, 1.0);
        view
    }

    /// Writes `x + theta + alpha gamma` into `out` without allocating the view.
    pub fn sample_view_into<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R, out: &mut DVector<f64>) {
        let d = self.dim();
        let z_theta = standard_normal_vector(d, rng);
        let z_gamma = standard_normal_vector(d, rng);
        out.copy_from(x);
        out.gemv(1.0, &self.theta_root, &z_theta, 1.0);
        out.gemv(self.alpha, &self.gamma_root, &z_gamma, 1.0);
    }
}

/// One augmented view of `x`.
pub fn sample_view<R: Rng + ?Sized>(model: &AugmentationModel, x: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!("sample has {} entries, model is {}-d", x.len(), model.dim())));
    }
    Ok(model.sampler()?.sample_view(x, rng))
}

/// Second moment `S` of augmented samples and outer product `G` of their means.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPair {
    pub s: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl MomentPair {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// `S - G`, the average augmentation covariance.
    pub fn augmentation_covariance(&self) -> DMatrix<f64> {
        &self.s - &self.g
    }
}

fn check_data(model: &AugmentationModel, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    if x.ncols() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, augmentation is {}-d",
            x.ncols(),
            model.dim()
        )));
    }
    Ok(())
}

/// Exact moments: the family is mean-preserving, so `G = X^T X / n` and
/// `S = G + Theta + alpha^2 Gamma`.
pub fn analytic_moments(model: &AugmentationModel, x: &DMatrix<f64>) -> Result<MomentPair> {
    check_data(model, x)?;
    let g = second_moment(x);
    let s = &g + model.covariance();
    Ok(MomentPair { s, g })
}

/// Monte-Carlo moments with entrywise standard errors.
#[derive(Clone, Debug)]
pub struct EmpiricalMoments {
    pub moments: MomentPair,
    pub s_se: DMatrix<f64>,
    pub g_se: DMatrix<f64>,
    pub draws: usize,
}

/// Plug-in estimates of `S` and `G` from `draws` independent views per sample.
///
/// View `t` of sample `i` is drawn from its own stream `(seed, i, t)`. The
/// `G` estimate subtracts `C_i / draws` from the outer product of the sample
/// mean, which removes its `O(1/draws)` bias.
pub fn empirical_moments(model: &AugmentationModel, x: &DMatrix<f64>, draws: usize, seed: u64) -> Result<EmpiricalMoments> {
    check_data(model, x)?;
    if draws < 2 {
        return Err(Error::InsufficientSamples(format!("need at least 2 draws per sample, got {draws}")));
    }
    let (n, d) = x.shape();
    let sampler = model.sampler()?;
    let m = draws as f64;

    let mut s_sum = DMatrix::<f64>::zeros(d, d);
    let mut g_sum = DMatrix::<f64>::zeros(d, d);
    let mut s_var = DMatrix::<f64>::zeros(d, d);
    let mut g_var = DMatrix::<f64>::zeros(d, d);

    let mut view = DVector::zeros(d);
    for i in 0..n {
        let xi = x.row(i).transpose();
        let mut mean = DVector::zeros(d);
        let mut m2 = DMatrix::zeros(d, d);
        let mut outer_mean = DMatrix::zeros(d, d);
        let mut outer_m2 = DMatrix::zeros(d, d);
        for t in 0..draws {
            let mut rng = stream_rng(seed, &[i as u64, t as u64]);
            sampler.sample_view_into(&xi, &mut rng, &mut view);
            let count = (t + 1) as f64;

            let delta = &view - &mean;
            mean.axpy(1.0 / count, &delta, 1.0);
            let delta_after = &view - &mean;
            m2.ger(1.0, &delta, &delta_after, 1.0);

            let outer = &view * view.transpose();
            let outer_delta = &outer - &outer_mean;
            outer_mean += &outer_delta / count;
            let outer_delta_after = &outer - &outer_mean;
            outer_m2 += outer_delta.component_mul(&outer_delta_after);
        }
        let cov = m2 / (m - 1.0);
        let g_i = &mean * mean.transpose() - &cov / m;

        s_sum += &outer_mean;
        g_sum += &g_i;
        s_var += outer_m2 / ((m - 1.0) * m);
        for a in 0..d {
            for b in 0..d {
                let first = (mean[a] * mean[a] * cov[(b, b)]
                    + mean[b] * mean[b] * cov[(a, a)]
                    + 2.0 * mean[a] * mean[b] * cov[(a, b)])
                    / m;
                let second = (cov[(a, a)] * cov[(b, b)] + cov[(a, b)] * cov[(a, b)]) / (m * (m - 1.0));
                g_var[(a, b)] += (first + second).max(0.0);
            }
        }
    }
    let nf = n as f64;
    Ok(EmpiricalMoments {
        moments: MomentPair { s: s_sum / nf, g: g_sum / nf },
        s_se: s_var.map(|v| v.max(0.0).sqrt() / nf),
        g_se: g_var.map(|v| v.sqrt() / nf),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal_matrix;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn example_model() -> AugmentationModel {
        let theta = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 0.5, 0.1, 0.0, 0.1, 0.2]);
        let gamma = diag(&[0.0, 0.0, 2.0]);
        AugmentationModel::new(theta, gamma, 0.7).unwrap()
    }

    #[test]
    fn covariance_cases() {
        let theta = diag(&[1.0, 2.0]);
        let gamma = diag(&[0.0, 3.0]);
        assert_eq!(AugmentationModel::new(theta.clone(), gamma.clone(), 0.0).unwrap().covariance(), theta);
        let pure = AugmentationModel::new(DMatrix::zeros(2, 2), gamma.clone(), 1.0).unwrap();
        assert_eq!(aug_covariance(&pure), gamma);
        let m = AugmentationModel::new(theta, gamma, 2.0).unwrap();
        assert_eq!(m.covariance(), diag(&[1.0, 14.0]));
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(AugmentationModel::new(diag(&[1.0]), diag(&[1.0, 1.0]), 0.0).is_err());
        assert!(AugmentationModel::new(diag(&[1.0]), diag(&[-1.0]), 0.0).is_err());
        assert!(AugmentationModel::new(diag(&[1.0]), diag(&[1.0]), -0.5).is_err());
    }

    #[test]
    fn degenerate_view_is_identity() {
        let x = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let mut rng = stream_rng(1, &[]);
        let v = sample_view(&AugmentationModel::none(3), &x, &mut rng).unwrap();
        assert_eq!(v, x);
    }

    #[test]
    fn view_mean_and_covariance_monte_carlo() {
        let model = example_model();
        let sampler = model.sampler().unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        let draws = 1_000_000usize;
        let mut rng = stream_rng(2024, &[]);
        let mut sum = DVector::zeros(3);
        let mut sum_outer = DMatrix::zeros(3, 3);
        let mut sum_outer_sq = DMatrix::zeros(3, 3);
        let mut view = DVector::zeros(3);
        for _ in 0..draws {
            sampler.sample_view_into(&x, &mut rng, &mut view);
            let c = &view - &x;
            sum += &c;
            let o = &c * c.transpose();
            sum_outer_sq += o.component_mul(&o);
            sum_outer += o;
        }
        let m = draws as f64;
        let sigma = model.covariance();
        for a in 0..3 {
            let mean = sum[a] / m;
            let se = (sigma[(a, a)] / m).sqrt();
            assert!(mean.abs() <= 4.0 * se, "coordinate {a}: mean {mean} se {se}");
            for b in 0..3 {
                let cov = sum_outer[(a, b)] / m;
                let var = sum_outer_sq[(a, b)] / m - cov * cov;
                let se = (var / m).sqrt().max(1e-300);
                assert!((cov - sigma[(a, b)]).abs() <= 4.0 * se, "entry ({a},{b}): {cov} vs {}", sigma[(a, b)]);
            }
        }
    }

    #[test]
    fn analytic_moment_cases() {
        let mut rng = stream_rng(5, &[]);
        let x = standard_normal_matrix(6, 3, &mut rng);
        let none = analytic_moments(&AugmentationModel::none(3), &x).unwrap();
        assert_eq!(none.s, none.g);
        assert!((none.g.clone() - x.tr_mul(&x) / 6.0).norm() < 1e-14);

        let model = example_model();
        let zero = analytic_moments(&model, &DMatrix::zeros(4, 3)).unwrap();
        assert_eq!(zero.s, model.covariance());
        assert_eq!(zero.g, DMatrix::zeros(3, 3));

        assert!(matches!(analytic_moments(&model, &DMatrix::zeros(0, 3)), Err(Error::EmptyData)));
    }

    #[test]
    fn analytic_matches_empirical_moments() {
        let mut rng = stream_rng(6, &[]);
        let x = standard_normal_matrix(3, 3, &mut rng);
        let model = example_model();
        let exact = analytic_moments(&model, &x).unwrap();
        let est = empirical_moments(&model, &x, 100_000, 77).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let ds = (est.moments.s[(a, b)] - exact.s[(a, b)]).abs();
                assert!(ds <= 4.0 * est.s_se[(a, b)], "S({a},{b}) off by {ds}, se {}", est.s_se[(a, b)]);
                let dg = (est.moments.g[(a, b)] - exact.g[(a, b)]).abs();
                assert!(dg <= 4.0 * est.g_se[(a, b)], "G({a},{b}) off by {dg}, se {}", est.g_se[(a, b)]);
            }
        }
    }

    #[test]
    fn empirical_moments_large_draw_limit() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 2.0]);
        let model = AugmentationModel::new(diag(&[0.5, 0.2]), diag(&[0.0, 1.0]), 1.5).unwrap();
        let exact = analytic_moments(&model, &x).unwrap();
        let est = empirical_moments(&model, &x, 1_000_000, 3).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((est.moments.s[(a, b)] - exact.s[(a, b)]).abs() <= 4.0 * est.s_se[(a, b)]);
                assert!((est.moments.g[(a, b)] - exact.g[(a, b)]).abs() <= 4.0 * est.g_se[(a, b)]);
            }
        }
    }

    #[test]
    fn deterministic_views_reproduce_analytic_moments() {
        let mut rng = stream_rng(7, &[]);
        let x = standard_normal_matrix(5, 3, &mut rng);
        let none = AugmentationModel::none(3);
        let exact = analytic_moments(&none, &x).unwrap();
        let est = empirical_moments(&none, &x, 7, 1).unwrap();
        // Only the summation order differs.
        let scale = exact.g.norm();
        assert!((est.moments.s - exact.s).norm() <= 1e-14 * scale);
        assert!((est.moments.g - exact.g).norm() <= 1e-14 * scale);
        assert_eq!(est.s_se, DMatrix::zeros(3, 3));
    }

    #[test]
    fn empirical_moments_are_reproducible() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
        let model = example_model();
        let a = empirical_moments(&model, &x, 50, 9).unwrap();
        let b = empirical_moments(&model, &x, 50, 9).unwrap();
        assert_eq!(a.moments, b.moments);
        assert_eq!(a.s_se, b.s_se);
        assert!(matches!(empirical_moments(&model, &x, 1, 9), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn disjoint_seed_ranges_agree() {
        let model = example_model();
        let sampler = model.sampler().unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0, -1.0]);
        let stats = |range: std::ops::Range<u64>| {
            let mut sum = DVector::zeros(3);
            let mut sq = DVector::zeros(3);
            let count = (range.end - range.start) as f64;
            for s in range {
                let v = sampler.sample_view(&x, &mut stream_rng(s, &[]));
                sq += v.component_mul(&v);
                sum += v;
            }
            let mean = sum / count;
            let var = sq / count - mean.component_mul(&mean);
            (mean, var, count)
        };
        let (m1, v1, c1) = stats(0..50_000);
        let (m2, v2, c2) = stats(50_000..100_000);
        for a in 0..3 {
            let se = (v1[a] / c1 + v2[a] / c2).sqrt();
            assert!((m1[a] - m2[a]).abs() <= 4.0 * se);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn moment_identity_holds(seed in 0u64..10_000, alpha in 0.0f64..50.0) {
            let mut rng = stream_rng(seed, &[]);
            let a = standard_normal_matrix(4, 4, &mut rng);
            let b = standard_normal_matrix(4, 4, &mut rng);
            let model = AugmentationModel::new(a.tr_mul(&a), b.tr_mul(&b), alpha).unwrap();
            let x = standard_normal_matrix(7, 4, &mut rng);
            let mp = analytic_moments(&model, &x).unwrap();
            let defect = (mp.augmentation_covariance() - model.covariance()).norm();
            prop_assert!(defect <= 1e-12 * model.covariance().norm());
        }

        #[test]
        fn gamma_directions_monotone_in_alpha(seed in 0u64..10_000, a1 in 0.0f64..10.0, a2 in 0.0f64..10.0) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let mut rng = stream_rng(seed, &[]);
            let b = standard_normal_matrix(3, 3, &mut rng);
            let c = standard_normal_matrix(3, 3, &mut rng);
            let gamma = b.tr_mul(&b);
            let theta = c.tr_mul(&c);
            let eig = crate::spectral::sym_eig(&gamma).unwrap();
            let m_lo = AugmentationModel::new(theta.clone(), gamma.clone(), lo).unwrap().covariance();
            let m_hi = AugmentationModel::new(theta, gamma, hi).unwrap().covariance();
            for j in 0..3 {
                let q = eig.basis.column(j);
                let e_lo = (q.transpose() * &m_lo * q)[(0, 0)];
                let e_hi = (q.transpose() * &m_hi * q)[(0, 0)];
                prop_assert!(e_hi >= e_lo - 1e-12 * e_hi.abs().max(1.0));
            }
        }
    }
}
