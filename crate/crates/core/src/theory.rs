//! Alignment thresholds and infinite-sample consistency.
//!
//! With data energies `c_i` on the important components and augmentation /
//! noise spectra `lambda_theta`, `lambda_gamma`,
//!
//! * `delta = min_i c_i / (c_i + lambda_theta_i)` and
//!   `eta = min_i c_i / sqrt(c_i + lambda_theta_i)` over important `i`,
//! * joint embedding recovers the important subspace as `n -> inf` iff
//!   `alpha^2 > max_j (1 - delta) / delta - lambda_theta_j / lambda_gamma_j`,
//! * reconstruction iff
//!   `alpha^2 > max_j lambda_gamma_j / eta^2 - lambda_theta_j / lambda_gamma_j - 1`,
//!
//! with `j` ranging over the noise components. The predicates in this
//! module evaluate the same question numerically on the limit moments, which
//! gives an independent route to the thresholds.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::augmentation::MomentPair;
use crate::datamodel::SpectralSpec;
use crate::error::{Error, Result};
use crate::spectral::{spd_inv_sqrt, sym_eig_raw, symmetrize, InvSqrtOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "supervised")]
    Supervised,
    #[serde(rename = "je")]
    JointEmbedding,
    #[serde(rename = "rc")]
    Reconstruction,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Supervised, Method::JointEmbedding, Method::Reconstruction];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::JointEmbedding => "je",
            Method::Reconstruction => "rc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "supervised" | "sl" => Ok(Method::Supervised),
            "je" | "joint-embedding" | "joint_embedding" => Ok(Method::JointEmbedding),
            "rc" | "reconstruction" => Ok(Method::Reconstruction),
            other => Err(Error::Format(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    ReconstructionPreferable,
    JointEmbeddingPreferable,
    Indeterminate,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::ReconstructionPreferable => "ReconstructionPreferable",
            Regime::JointEmbeddingPreferable => "JointEmbeddingPreferable",
            Regime::Indeterminate => "Indeterminate",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ReconstructionPreferable" => Ok(Regime::ReconstructionPreferable),
            "JointEmbeddingPreferable" => Ok(Regime::JointEmbeddingPreferable),
            "Indeterminate" => Ok(Regime::Indeterminate),
            other => Err(Error::Format(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub delta: f64,
    pub eta: f64,
    /// Squared joint-embedding threshold, possibly negative.
    pub alpha_je_sq_raw: f64,
    /// Squared reconstruction threshold, possibly negative.
    pub alpha_rc_sq_raw: f64,
    /// `sqrt(max(alpha_je_sq_raw, 0))`.
    pub alpha_je: f64,
    /// `sqrt(max(alpha_rc_sq_raw, 0))`.
    pub alpha_rc: f64,
    /// Noise level `eta^2 / delta` separating the two regimes.
    pub crossover: f64,
    pub regime: Regime,
}

fn clamped_sqrt(raw: f64) -> f64 {
    raw.max(0.0).sqrt()
}

pub fn delta(spec: &SpectralSpec) -> Result<f64> {
    spec.validate()?;
    Ok((0..spec.k).map(|i| spec.c[i] / (spec.c[i] + spec.lambda_theta[i])).fold(f64::INFINITY, f64::min))
}

pub fn eta(spec: &SpectralSpec) -> Result<f64> {
    spec.validate()?;
    Ok((0..spec.k).map(|i| spec.c[i] / (spec.c[i] + spec.lambda_theta[i]).sqrt()).fold(f64::INFINITY, f64::min))
}

fn noise_max(spec: &SpectralSpec, f: impl Fn(f64, f64) -> f64) -> f64 {
    spec.noise_range()
        .map(|j| f(spec.lambda_theta[j], spec.lambda_gamma[j]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(alpha_je^2 raw, alpha_je clamped)`.
pub fn threshold_je(spec: &SpectralSpec) -> Result<(f64, f64)> {
    let delta = delta(spec)?;
    let raw = noise_max(spec, |theta, gamma| (1.0 - delta) / delta - theta / gamma);
    Ok((raw, clamped_sqrt(raw)))
}

/// `(alpha_rc^2 raw, alpha_rc clamped)`.
pub fn threshold_rc(spec: &SpectralSpec) -> Result<(f64, f64)> {
    let eta = eta(spec)?;
    let raw = noise_max(spec, |theta, gamma| gamma / (eta * eta) - theta / gamma - 1.0);
    Ok((raw, clamped_sqrt(raw)))
}

pub fn classify_regime(spec: &SpectralSpec) -> Result<Regime> {
    let crossover = eta(spec)?.powi(2) / delta(spec)?;
    let noise = &spec.lambda_gamma[spec.k..];
    let max = noise.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = noise.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if max < crossover {
        Regime::ReconstructionPreferable
    } else if min > crossover {
        Regime::JointEmbeddingPreferable
    } else {
        Regime::Indeterminate
    })
}

pub fn threshold_report(spec: &SpectralSpec) -> Result<ThresholdReport> {
    let (delta, eta) = (delta(spec)?, eta(spec)?);
    let (alpha_je_sq_raw, alpha_je) = threshold_je(spec)?;
    let (alpha_rc_sq_raw, alpha_rc) = threshold_rc(spec)?;
    Ok(ThresholdReport {
        delta,
        eta,
        alpha_je_sq_raw,
        alpha_rc_sq_raw,
        alpha_je,
        alpha_rc,
        crossover: eta * eta / delta,
        regime: classify_regime(spec)?,
    })
}

/// Infinite-sample moments in the shared eigenbasis (coordinates `0..k`
/// important, the rest noise).
///
/// With `corrupted`, noise coordinates carry data energy `lambda_gamma`
/// that the augmentation adds to once more (`S = lambda_theta +
/// (1 + alpha^2) lambda_gamma`, `G = lambda_gamma`); otherwise they hold
/// augmentation variance only.
pub fn limit_moments(spec: &SpectralSpec, alpha: f64, corrupted: bool) -> Result<MomentPair> {
    spec.validate()?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::SpecInvalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let a2 = alpha * alpha;
    let mut s = DVector::zeros(spec.d);
    let mut g = DVector::zeros(spec.d);
    for i in 0..spec.d {
        let (theta, gamma) = (spec.lambda_theta[i], spec.lambda_gamma[i]);
        if i < spec.k {
            g[i] = spec.c[i];
            s[i] = spec.c[i] + theta + a2 * gamma;
        } else if corrupted {
            g[i] = gamma;
            s[i] = theta + (1.0 + a2) * gamma;
        } else {
            s[i] = theta + a2 * gamma;
        }
    }
    Ok(MomentPair { s: DMatrix::from_diagonal(&s), g: DMatrix::from_diagonal(&g) })
}

/// [`limit_moments`] expressed in the basis `q` (`Q M Q^T`).
pub fn limit_moments_in_basis(spec: &SpectralSpec, alpha: f64, corrupted: bool, q: &DMatrix<f64>) -> Result<MomentPair> {
    let m = limit_moments(spec, alpha, corrupted)?;
    Ok(MomentPair { s: symmetrize(&(q * m.s * q.transpose())), g: symmetrize(&(q * m.g * q.transpose())) })
}

/// Whether a direction lies (mostly) on the first `k` coordinates.
fn is_important(v: &[f64], k: usize) -> bool {
    v[..k].iter().map(|x| x * x).sum::<f64>() > 0.5
}

/// Strict separation of important spectrum values from noise ones.
fn separated(values: &[f64], important: &[bool]) -> bool {
    let min_important = values.iter().zip(important).filter(|(_, &imp)| imp).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let max_noise = values.iter().zip(important).filter(|(_, &imp)| !imp).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    important.iter().filter(|&&imp| imp).count() > 0 && min_important > max_noise
}

/// Whether the method, trained on corrupted data at alignment `alpha`,
/// selects exactly the important subspace in the infinite-sample limit.
pub fn consistency_predicate(method: Method, spec: &SpectralSpec, alpha: f64) -> Result<bool> {
    let limit = limit_moments(spec, alpha, true)?;
    let k = spec.k;
    let s_inv_sqrt = spd_inv_sqrt(&limit.s, InvSqrtOptions::strict())?;
    // Raw decompositions: canonicalizing near-tied pairs would decouple the
    // vectors from their values right at the crossing.
    let spectrum = match method {
        Method::Supervised => return Ok(true),
        Method::JointEmbedding => sym_eig_raw(&symmetrize(&(&s_inv_sqrt * &limit.g * &s_inv_sqrt)))?,
        // left singular pairs of G S^{-1/2}, squared
        Method::Reconstruction => sym_eig_raw(&symmetrize(&(&limit.g * &s_inv_sqrt * &s_inv_sqrt * &limit.g)))?,
    };
    let important: Vec<bool> = spectrum.basis.column_iter().map(|c| is_important(c.as_slice(), k)).collect();
    Ok(separated(&spectrum.values, &important))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn worked(gamma: f64) -> SpectralSpec {
        SpectralSpec { n: 1, d: 2, k: 1, c: vec![1.0], lambda_theta: vec![1.0, 0.5], lambda_gamma: vec![0.0, gamma], seed: 0 }
    }

    #[test]
    fn worked_thresholds() {
        let strong = threshold_report(&worked(4.0)).unwrap();
        assert_relative_eq!(strong.delta, 0.5, epsilon = 1e-15);
        assert_relative_eq!(strong.eta * strong.eta, 0.5, epsilon = 1e-15);
        assert_relative_eq!(strong.alpha_je_sq_raw, 0.875, epsilon = 1e-14);
        assert_relative_eq!(strong.alpha_rc_sq_raw, 6.875, epsilon = 1e-14);
        assert_relative_eq!(strong.alpha_je, 0.875f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(strong.alpha_rc, 6.875f64.sqrt(), epsilon = 1e-14);
        assert_eq!(strong.regime, Regime::JointEmbeddingPreferable);
        assert!(strong.alpha_je < strong.alpha_rc);

        let weak = threshold_report(&worked(0.8)).unwrap();
        assert_relative_eq!(weak.alpha_je_sq_raw, 0.375, epsilon = 1e-14);
        assert_relative_eq!(weak.alpha_rc_sq_raw, -0.025, epsilon = 1e-14);
        assert_eq!(weak.alpha_rc, 0.0);
        assert_eq!(weak.regime, Regime::ReconstructionPreferable);
        assert!(weak.alpha_je_sq_raw > weak.alpha_rc_sq_raw);
    }

    #[test]
    fn vacuous_and_vanishing_cases() {
        let mut spec = worked(4.0);
        spec.lambda_theta[1] = 10.0;
        let (raw, clamped) = threshold_je(&spec).unwrap();
        assert!(raw <= 0.0);
        assert_eq!(clamped, 0.0);

        let mut previous = f64::INFINITY;
        for g in [1e-2, 1e-4, 1e-8, 1e-12] {
            let (raw, clamped) = threshold_rc(&worked(g)).unwrap();
            assert!(raw < previous);
            assert_eq!(clamped, 0.0);
            previous = raw;
        }
        assert!(previous < -1e10);
    }

    #[test]
    fn straddling_noise_is_indeterminate() {
        let spec = SpectralSpec {
            n: 1,
            d: 3,
            k: 1,
            c: vec![1.0],
            lambda_theta: vec![1.0, 0.5, 0.5],
            lambda_gamma: vec![0.0, 0.5, 2.0],
            seed: 0,
        };
        assert_eq!(classify_regime(&spec).unwrap(), Regime::Indeterminate);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = worked(4.0);
        spec.lambda_gamma[1] = 0.0;
        assert!(matches!(threshold_je(&spec), Err(Error::SpecInvalid(_))));
        assert!(matches!(consistency_predicate(Method::Reconstruction, &spec, 1.0), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn clean_limit_moments() {
        let spec = worked(4.0);
        let m = limit_moments(&spec, 0.0, false).unwrap();
        assert_eq!(m.s, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])));
        assert_eq!(m.g, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
        let corrupted = limit_moments(&spec, 2.0, true).unwrap();
        assert_eq!(corrupted.s[(1, 1)], 0.5 + 5.0 * 4.0);
        assert_eq!(corrupted.g[(1, 1)], 4.0);
    }

    #[test]
    fn strong_alignment_silences_noise_coordinates() {
        let spec = worked(4.0);
        let mut previous = f64::INFINITY;
        for alpha in [1.0, 10.0, 100.0, 1000.0] {
            let m = limit_moments(&spec, alpha, true).unwrap();
            let noise = m.g[(1, 1)] / m.s[(1, 1)];
            assert!(noise < previous);
            previous = noise;
        }
        assert!(previous < 1e-6);
    }

    #[test]
    fn worked_predicates() {
        let spec = worked(4.0);
        assert!(consistency_predicate(Method::JointEmbedding, &spec, 1.0).unwrap());
        assert!(!consistency_predicate(Method::JointEmbedding, &spec, 0.9).unwrap());
        assert!(!consistency_predicate(Method::Reconstruction, &spec, 2.0).unwrap());
        assert!(consistency_predicate(Method::Reconstruction, &spec, 2.7).unwrap());
        assert!(consistency_predicate(Method::Supervised, &spec, 0.0).unwrap());
    }

    pub(crate) fn random_spec() -> impl Strategy<Value = SpectralSpec> {
        (1usize..4, 1usize..5).prop_flat_map(|(k, noise)| {
            let d = k + noise;
            (
                prop::collection::vec(0.05f64..10.0, k),
                prop::collection::vec(0.0f64..5.0, d),
                prop::collection::vec(0.01f64..10.0, noise),
            )
                .prop_map(move |(mut c, theta, gamma_noise)| {
                    c.sort_by(|a, b| b.total_cmp(a));
                    let mut lambda_gamma = vec![0.0; k];
                    lambda_gamma.extend(gamma_noise);
                    SpectralSpec { n: 1, d, k, c, lambda_theta: theta, lambda_gamma, seed: 0 }
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn predicate_agrees_with_thresholds(spec in random_spec(), alphas in prop::collection::vec(0.0f64..4.0, 6)) {
            let (je, _) = threshold_je(&spec).unwrap();
            let (rc, _) = threshold_rc(&spec).unwrap();
            for alpha in alphas {
                let a2 = alpha * alpha;
                if (a2 - je).abs() > 1e-9 * je.abs().max(1.0) {
                    prop_assert_eq!(consistency_predicate(Method::JointEmbedding, &spec, alpha).unwrap(), a2 > je);
                }
                if (a2 - rc).abs() > 1e-9 * rc.abs().max(1.0) {
                    prop_assert_eq!(consistency_predicate(Method::Reconstruction, &spec, alpha).unwrap(), a2 > rc);
                }
            }
        }

        #[test]
        fn regime_implies_threshold_order(spec in random_spec()) {
            let report = threshold_report(&spec).unwrap();
            match report.regime {
                Regime::ReconstructionPreferable => prop_assert!(report.alpha_je_sq_raw > report.alpha_rc_sq_raw),
                Regime::JointEmbeddingPreferable => prop_assert!(report.alpha_je_sq_raw < report.alpha_rc_sq_raw),
                Regime::Indeterminate => {}
            }
        }

        #[test]
        fn thresholds_decrease_with_noise_augmentation(spec in random_spec(), bump in 0.0f64..5.0, pick in any::<prop::sample::Index>()) {
            let j = spec.k + pick.index(spec.d - spec.k);
            let mut bigger = spec.clone();
            bigger.lambda_theta[j] += bump;
            prop_assert!(threshold_je(&bigger).unwrap().0 <= threshold_je(&spec).unwrap().0);
            prop_assert!(threshold_rc(&bigger).unwrap().0 <= threshold_rc(&spec).unwrap().0);
        }
    }
}
