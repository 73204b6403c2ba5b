use proptest::prelude::*;
use sslab_core::augmentation::{analytic_moments, AugmentationModel};
use sslab_core::datamodel::{synth_dataset, SpectralSpec};
use sslab_core::evalx::{fit_probe, represent};
use sslab_core::oracle::{oracle_supervised, threshold_search, OracleOptions};
use sslab_core::rng::{standard_normal_matrix, stream_rng};
use sslab_core::solvers::{solve_joint_embedding, solve_reconstruction_moments, solve_supervised, SolveOptions};
use sslab_core::spectral::row_space_distance;
use sslab_core::theory::{limit_moments, threshold_je, threshold_rc, Method};
use sslab_core::DMatrix;

fn small_spec(n: usize, seed: u64) -> SpectralSpec {
    SpectralSpec {
        n,
        d: 4,
        k: 2,
        c: vec![2.0, 1.0],
        lambda_theta: vec![0.5, 0.3, 0.4, 0.2],
        lambda_gamma: vec![0.0, 0.0, 1.5, 0.7],
        seed,
    }
}

#[test]
fn empirical_moments_approach_the_limit() {
    let spec = small_spec(100_000, 11);
    let model = synth_dataset(&spec).unwrap();
    let alpha = 0.7;
    let augmentation = model.augmentation(alpha).unwrap();
    let moments = analytic_moments(&augmentation, &model.x_corrupt).unwrap();
    let limit = limit_moments(&spec, alpha, true).unwrap();
    let q = &model.q;
    for (empirical, exact) in [(&moments.s, &limit.s), (&moments.g, &limit.g)] {
        let rotated = q.transpose() * empirical * q;
        let rel = (&rotated - exact).norm() / exact.norm();
        assert!(rel < 0.02, "relative deviation {rel}");
    }
}

fn random_spec() -> impl Strategy<Value = SpectralSpec> {
    (1usize..4, 1usize..5).prop_flat_map(|(k, noise)| {
        let d = k + noise;
        (
            prop::collection::vec(0.05f64..10.0, k),
            prop::collection::vec(0.0f64..5.0, d),
            prop::collection::vec(0.01f64..10.0, noise),
        )
            .prop_map(move |(mut c, lambda_theta, gamma)| {
                c.sort_by(|a, b| b.total_cmp(a));
                let mut lambda_gamma = vec![0.0; k];
                lambda_gamma.extend(gamma);
                SpectralSpec { n: 1, d, k, c, lambda_theta, lambda_gamma, seed: 0 }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bisection_recovers_closed_form_thresholds(spec in random_spec()) {
        for (method, (raw, clamped)) in [
            (Method::JointEmbedding, threshold_je(&spec).unwrap()),
            (Method::Reconstruction, threshold_rc(&spec).unwrap()),
        ] {
            let hi = 2.0 * clamped + 1.0;
            match threshold_search(method, &spec, 0.0, hi) {
                Ok(found) => {
                    prop_assert!(raw > 0.0);
                    prop_assert!((found - clamped).abs() <= 1e-8 * clamped.max(1.0), "{method}: {found} vs {clamped}");
                }
                Err(sslab_core::Error::NoBracket { .. }) => prop_assert!(raw <= 1e-12 * (1.0 + raw.abs())),
                Err(other) => prop_assert!(false, "unexpected error {other}"),
            }
        }
    }
}

#[test]
fn supervised_closed_form_matches_gradient_descent() {
    let x = standard_normal_matrix(6, 3, &mut stream_rng(21, &[]));
    let y = standard_normal_matrix(6, 2, &mut stream_rng(22, &[]));
    let model = AugmentationModel::diagonal(&[0.4, 0.2, 0.3], &[0.0, 0.5, 1.0], 0.6).unwrap();
    let closed = solve_supervised(&x, &y, &model.covariance()).unwrap().v;
    let opts = OracleOptions { max_iters: 6000, draws: 256, seed: 3, ..Default::default() };
    let fit = oracle_supervised(&x, &y, &model, &opts).unwrap();
    let rel = (&fit.v - &closed).norm() / closed.norm();
    assert!(rel < 1e-3, "relative gap {rel}");
}

#[test]
fn more_views_per_epoch_reduce_oracle_variance() {
    let x = standard_normal_matrix(4, 2, &mut stream_rng(31, &[]));
    let y = standard_normal_matrix(4, 1, &mut stream_rng(32, &[]));
    let model = AugmentationModel::diagonal(&[0.5, 0.5], &[0.0, 1.0], 1.0).unwrap();
    let closed = solve_supervised(&x, &y, &model.covariance()).unwrap().v;
    let spread = |draws: usize| {
        let runs = 40;
        (0..runs)
            .map(|seed| {
                let opts = OracleOptions { max_iters: 400, draws, seed: 1000 + seed, ..Default::default() };
                (oracle_supervised(&x, &y, &model, &opts).unwrap().v - &closed).norm_squared()
            })
            .sum::<f64>()
            / runs as f64
    };
    let ratio = spread(32) / spread(16);
    assert!((0.3..0.75).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn coinciding_row_spaces_give_equal_probe_losses() {
    // Without augmentation the clean data span is the only non-zero structure,
    // so both solvers select it.
    let spec = small_spec(200, 5);
    let model = synth_dataset(&spec).unwrap();
    let y = sslab_core::datamodel::synth_labels(&model, 2, 9);
    let augmentation = AugmentationModel::new(DMatrix::identity(4, 4) * 0.1, DMatrix::zeros(4, 4), 0.0).unwrap();
    let moments = analytic_moments(&augmentation, &model.x_clean).unwrap();
    let je = solve_joint_embedding(&moments, 2).unwrap();
    let rc = solve_reconstruction_moments(&moments, 2, SolveOptions::default()).unwrap();
    let dist = row_space_distance(&je.w, &rc.encoder).unwrap();
    assert!(dist < 1e-8, "{dist}");
    let je_loss = fit_probe(&represent(&je, &model.x_clean).unwrap(), &y).unwrap().loss;
    let rc_loss = fit_probe(&represent(&rc, &model.x_clean).unwrap(), &y).unwrap().loss;
    assert!((je_loss - rc_loss).abs() < 1e-8);
}
