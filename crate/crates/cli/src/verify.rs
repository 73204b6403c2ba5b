//! Self-checks of the solvers against oracles and known identities.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use sslab_core::augmentation::{analytic_moments, AugmentationModel, MomentPair};
use sslab_core::datamodel::SpectralSpec;
use sslab_core::evalx::fit_probe;
use sslab_core::oracle::{oracle_joint_embedding, oracle_reconstruction_moments, oracle_supervised, threshold_search, OracleOptions};
use sslab_core::rng::{derive_seed, standard_normal_matrix, stream_rng};
use sslab_core::solvers::{
    attraction, feasibility_defect, reconstruction_objective, ridge_equivalence_check, solve_joint_embedding,
    solve_reconstruction_moments, solve_supervised, SolveOptions,
};
use sslab_core::spectral::{row_space_distance, spd_inv_sqrt, sym_eig, symmetrize, InvSqrtOptions};
use sslab_core::theory::{classify_regime, consistency_predicate, threshold_je, threshold_rc};
use sslab_core::{DMatrix, Method, Regime};

use crate::config::{DatasetConfig, SweepConfig, SCHEMA_VERSION};
use crate::sweep::{rows_to_csv, run_sweep, Source};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracles,
    Invariants,
    Thresholds,
    Lemma,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oracles, Suite::Invariants, Suite::Thresholds, Suite::Lemma];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Oracles => "oracles",
            Suite::Invariants => "invariants",
            Suite::Thresholds => "thresholds",
            Suite::Lemma => "lemma",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL.into_iter().find(|suite| suite.as_str() == s).ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    /// Worst observed value against its tolerance, or the failing case.
    pub detail: String,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Multiplies every tolerance; values below 1 tighten the suites.
    pub tolerance_scale: f64,
    /// Random instances per check.
    pub instances: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 0, tolerance_scale: 1.0, instances: 200 }
    }
}

/// Tracks the worst value of a metric that must stay below a tolerance.
struct Worst {
    name: &'static str,
    tol: f64,
    value: f64,
    case: Option<String>,
    error: Option<String>,
}

impl Worst {
    fn new(name: &'static str, tol: f64, opts: &VerifyOptions) -> Self {
        Worst { name, tol: tol * opts.tolerance_scale, value: 0.0, case: None, error: None }
    }

    fn observe(&mut self, value: f64, case: impl FnOnce() -> String) {
        if !(value <= self.value) {
            self.value = value;
            self.case = Some(case());
        }
    }

    fn fail(&mut self, error: String) {
        self.error.get_or_insert(error);
    }

    fn finish(self, suite: Suite) -> Check {
        let passed = self.error.is_none() && self.value <= self.tol;
        let detail = match (&self.error, &self.case) {
            (Some(e), _) => e.clone(),
            (None, Some(case)) => format!("worst {:.3e} (tolerance {:.3e}) at {case}", self.value, self.tol),
            (None, None) => format!("worst {:.3e} (tolerance {:.3e})", self.value, self.tol),
        };
        Check { suite, name: self.name.to_string(), passed, detail }
    }
}

/// Random data with a decaying spectrum and a dense random augmentation.
fn random_moments(seed: u64) -> (MomentPair, usize) {
    let mut rng = stream_rng(seed, &[]);
    let d = rng.random_range(2..=20);
    let k = rng.random_range(1..=(d / 2).max(1));
    let n = d + rng.random_range(5..40);
    let mut x = standard_normal_matrix(n, d, &mut rng);
    for j in 0..d {
        x.column_mut(j).scale_mut(3.0 * 0.8f64.powi(j as i32));
    }
    let a = standard_normal_matrix(d, d, &mut rng);
    let b = standard_normal_matrix(d, d, &mut rng);
    let model = AugmentationModel::new(&a * a.transpose() / d as f64, &b * b.transpose() / d as f64, rng.random_range(0.0..2.0))
        .expect("random covariances are PSD");
    (analytic_moments(&model, &x).expect("shapes agree"), k)
}

fn random_spec(seed: u64) -> SpectralSpec {
    let mut rng = stream_rng(seed, &[]);
    let k = rng.random_range(1..4);
    let d = k + rng.random_range(1..5);
    let mut c: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..10.0)).collect();
    c.sort_by(|a, b| b.total_cmp(a));
    let lambda_theta = (0..d).map(|_| rng.random_range(0.0..5.0)).collect();
    let lambda_gamma = (0..d).map(|i| if i < k { 0.0 } else { rng.random_range(0.01..10.0) }).collect();
    SpectralSpec { n: 1, d, k, c, lambda_theta, lambda_gamma, seed }
}

fn oracles(opts: &VerifyOptions) -> Vec<Check> {
    let base = derive_seed(opts.seed, &[1]);
    let oracle_opts = OracleOptions::default();
    let mut je_gap = Worst::new("je_objective_gap", 1e-6, opts);
    let mut je_dist = Worst::new("je_subspace_distance", 1e-6, opts);
    let mut rc_gap = Worst::new("rc_objective_gap", 1e-6, opts);
    for i in 0..opts.instances as u64 {
        let (m, k) = random_moments(derive_seed(base, &[i]));
        let case = || format!("instance {i}");
        match (solve_joint_embedding(&m, k), oracle_joint_embedding(&m, k, &OracleOptions { seed: i, ..oracle_opts })) {
            (Ok(closed), Ok(fit)) => {
                je_gap.observe((attraction(&m, &closed.w) - fit.objective).abs(), case);
                // Only a clear spectral gap pins the subspace down.
                let whitened = spd_inv_sqrt(&m.s, InvSqrtOptions::default())
                    .and_then(|r| sym_eig(&symmetrize(&(&r * &m.g * &r))))
                    .map(|e| e.values);
                if let Ok(values) = whitened {
                    if k < m.dim() && values[k - 1] - values[k] > 1e-2 {
                        if let Ok(dist) = row_space_distance(&closed.w, &fit.w) {
                            je_dist.observe(dist, case);
                        }
                    }
                }
            }
            (a, b) => je_gap.fail(format!("instance {i}: {:?} / {:?}", a.err(), b.err())),
        }
        let closed = solve_reconstruction_moments(&m, k, SolveOptions::default());
        match (closed, oracle_reconstruction_moments(&m, k, &OracleOptions { seed: i, ..oracle_opts })) {
            (Ok(closed), Ok(fit)) => {
                rc_gap.observe((reconstruction_objective(&m, &closed.encoder, &closed.decoder) - fit.objective).abs(), case)
            }
            (a, b) => rc_gap.fail(format!("instance {i}: {:?} / {:?}", a.err(), b.err())),
        }
    }

    let mut sup = Worst::new("supervised_gradient_descent", 1e-3, opts);
    let x = standard_normal_matrix(6, 3, &mut stream_rng(base, &[1 << 32]));
    let y = standard_normal_matrix(6, 2, &mut stream_rng(base, &[1 << 33]));
    let model = AugmentationModel::diagonal(&[0.4, 0.2, 0.3], &[0.0, 0.5, 1.0], 0.6).expect("valid spectra");
    let fit_opts = OracleOptions { max_iters: 8000, draws: 2048, seed: base, ..Default::default() };
    match (solve_supervised(&x, &y, &model.covariance()), oracle_supervised(&x, &y, &model, &fit_opts)) {
        (Ok(closed), Ok(fit)) => sup.observe((&fit.v - &closed.v).norm() / closed.v.norm(), || "6 x 3 instance".into()),
        (a, b) => sup.fail(format!("{:?} / {:?}", a.err(), b.err())),
    }
    [je_gap, je_dist, rc_gap, sup].into_iter().map(|w| w.finish(Suite::Oracles)).collect()
}

fn invariants(opts: &VerifyOptions) -> Vec<Check> {
    let base = derive_seed(opts.seed, &[2]);
    let mut probe = Worst::new("probe_reparameterization", 1e-8, opts);
    let mut feasible = Worst::new("je_feasibility", 1e-8, opts);
    let mut identity = Worst::new("moment_identity", 1e-12, opts);
    for i in 0..opts.instances as u64 {
        let seed = derive_seed(base, &[i]);
        let mut rng = stream_rng(seed, &[]);
        let k = rng.random_range(1..6);
        let z = standard_normal_matrix(30, k, &mut rng);
        let y = standard_normal_matrix(30, 2, &mut rng);
        let b = standard_normal_matrix(k, k, &mut rng) + DMatrix::identity(k, k) * 2.0;
        if b.clone().try_inverse().is_some_and(|inv| inv.norm() * b.norm() < 1e6) {
            match (fit_probe(&z, &y), fit_probe(&(&z * b.transpose()), &y)) {
                (Ok(p), Ok(q)) => probe.observe((p.loss - q.loss).abs() / p.loss.max(1.0), || format!("instance {i}")),
                (a, b) => probe.fail(format!("instance {i}: {:?} / {:?}", a.err(), b.err())),
            }
        }

        let (m, k) = random_moments(seed);
        match solve_joint_embedding(&m, k) {
            Ok(sol) => feasible.observe(feasibility_defect(&m, &sol.w), || format!("instance {i}")),
            Err(e) => feasible.fail(format!("instance {i}: {e}")),
        }

        let d = rng.random_range(1..8);
        let a = standard_normal_matrix(d, d, &mut rng);
        let g = standard_normal_matrix(d, d, &mut rng);
        let alpha = rng.random_range(0.0..3.0);
        let x = standard_normal_matrix(d + 3, d, &mut rng);
        let (theta, gamma) = (&a * a.transpose(), &g * g.transpose());
        let expected = &theta + &gamma * (alpha * alpha);
        match AugmentationModel::new(theta, gamma, alpha).and_then(|model| analytic_moments(&model, &x)) {
            Ok(m) => identity.observe((m.augmentation_covariance() - &expected).amax() / expected.amax().max(1e-300), || {
                format!("instance {i}")
            }),
            Err(e) => identity.fail(format!("instance {i}: {e}")),
        }
    }

    let mut determinism = Check {
        suite: Suite::Invariants,
        name: "sweep_thread_independence".into(),
        passed: false,
        detail: String::new(),
    };
    let config = tiny_sweep(opts.seed);
    let outcome = Source::load(&config.dataset).map_err(|e| e.to_string()).and_then(|source| {
        let run = |threads| {
            run_sweep(&config, &source, Some(threads)).and_then(|out| rows_to_csv(&out.rows)).map_err(|e| e.to_string())
        };
        Ok((run(1)?, run(4)?))
    });
    match outcome {
        Ok((one, four)) => {
            determinism.passed = one == four;
            determinism.detail = format!("{} bytes with 1 thread, {} with 4, identical: {}", one.len(), four.len(), one == four);
        }
        Err(e) => determinism.detail = e,
    }

    let mut checks: Vec<Check> = [probe, feasible, identity].into_iter().map(|w| w.finish(Suite::Invariants)).collect();
    checks.push(determinism);
    checks
}

fn tiny_sweep(seed: u64) -> SweepConfig {
    SweepConfig {
        schema_version: SCHEMA_VERSION,
        dataset_id: "verify".into(),
        dataset: DatasetConfig::Synthetic {
            spec: SpectralSpec {
                n: 64,
                d: 6,
                k: 2,
                c: vec![3.0, 1.0],
                lambda_theta: vec![0.2; 6],
                lambda_gamma: vec![0.0, 0.0, 2.0, 1.0, 0.5, 0.25],
                seed,
            },
            label_dim: 2,
        },
        methods: Method::ALL.to_vec(),
        n_grid: vec![32, 64],
        alpha_grid: vec![0.0, 1.0, 4.0],
        lambda_gamma_max_grid: vec![1.0, 100.0],
        seeds: vec![seed, seed.wrapping_add(1)],
        k: 2,
        output_path: None,
        probe: Default::default(),
        strict: false,
    }
}

fn thresholds(opts: &VerifyOptions) -> Vec<Check> {
    let base = derive_seed(opts.seed, &[3]);
    let mut je = Worst::new("je_bisection_agreement", 1e-7, opts);
    let mut rc = Worst::new("rc_bisection_agreement", 1e-7, opts);
    let mut iff = Worst::new("predicate_iff_threshold", 0.0, opts);
    let mut ordering = Worst::new("regime_ordering", 0.0, opts);
    for i in 0..opts.instances as u64 {
        let spec = random_spec(derive_seed(base, &[i]));
        for (method, worst, closed) in [
            (Method::JointEmbedding, &mut je, threshold_je(&spec)),
            (Method::Reconstruction, &mut rc, threshold_rc(&spec)),
        ] {
            let Ok((raw, clamped)) = closed else {
                worst.fail(format!("spec {i}: threshold undefined"));
                continue;
            };
            match threshold_search(method, &spec, 0.0, 2.0 * clamped + 1.0) {
                Ok(found) => worst.observe((found - clamped).abs() / clamped.max(1.0), || format!("spec {i}")),
                Err(sslab_core::Error::NoBracket { .. }) if raw <= 1e-12 * (1.0 + raw.abs()) => {}
                Err(e) => worst.fail(format!("spec {i}: {e}")),
            }
            // Off a thin band around the threshold, the predicate is the
            // comparison with the raw squared threshold.
            let mut rng = stream_rng(base, &[i, 7]);
            for _ in 0..8 {
                let alpha: f64 = rng.random_range(0.0..(2.0 * clamped + 1.0));
                if (alpha * alpha - raw).abs() <= 1e-9 * (1.0 + raw.abs()) {
                    continue;
                }
                match consistency_predicate(method, &spec, alpha) {
                    Ok(holds) => iff.observe(f64::from(u8::from(holds != (alpha * alpha > raw))), || format!("spec {i}, {method}, alpha {alpha}")),
                    Err(e) => iff.fail(format!("spec {i}: {e}")),
                }
            }
        }
    }
    // The regime claim: a strict ordering of the raw squared thresholds.
    let mut decided = 0usize;
    for i in 0..(opts.instances as u64 * 50) {
        if decided >= 500 {
            break;
        }
        let spec = random_spec(derive_seed(base, &[1 << 40, i]));
        let (Ok(regime), Ok((je_raw, _)), Ok((rc_raw, _))) = (classify_regime(&spec), threshold_je(&spec), threshold_rc(&spec)) else {
            ordering.fail(format!("spec {i}: undefined"));
            continue;
        };
        let violated = match regime {
            Regime::ReconstructionPreferable => rc_raw >= je_raw,
            Regime::JointEmbeddingPreferable => je_raw >= rc_raw,
            Regime::Indeterminate => continue,
        };
        decided += 1;
        ordering.observe(f64::from(u8::from(violated)), || format!("spec {i} ({regime})"));
    }
    let mut checks: Vec<Check> = [je, rc, iff, ordering].into_iter().map(|w| w.finish(Suite::Thresholds)).collect();
    checks[3].detail.push_str(&format!(", {decided} decided specs"));
    checks
}

fn lemma(opts: &VerifyOptions) -> Vec<Check> {
    let base = derive_seed(opts.seed, &[4]);
    let mut z = Worst::new("ridge_equivalence_z", 4.0, opts);
    let instances = opts.instances.min(50) as u64;
    for i in 0..instances {
        let seed = derive_seed(base, &[i]);
        let mut rng = stream_rng(seed, &[]);
        let d = rng.random_range(1..5);
        let ell = rng.random_range(1..3);
        let n = rng.random_range(2..6);
        let x = standard_normal_matrix(n, d, &mut rng);
        let y = standard_normal_matrix(n, ell, &mut rng);
        let v = standard_normal_matrix(ell, d, &mut rng);
        let a = standard_normal_matrix(d, d, &mut rng);
        let g = standard_normal_matrix(d, d, &mut rng);
        let alpha = rng.random_range(0.0..2.0);
        let outcome = AugmentationModel::new(&a * a.transpose() / d as f64, &g * g.transpose() / d as f64, alpha)
            .and_then(|model| ridge_equivalence_check(&x, &y, &v, &model, 100_000, seed));
        match outcome {
            Ok(check) => z.observe(check.z_score(), || format!("instance {i}")),
            Err(e) => z.fail(format!("instance {i}: {e}")),
        }
    }
    vec![z.finish(Suite::Lemma)]
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Vec<Check> {
    match suite {
        Suite::Oracles => oracles(opts),
        Suite::Invariants => invariants(opts),
        Suite::Thresholds => thresholds(opts),
        Suite::Lemma => lemma(opts),
    }
}
