//! Grid sweeps over sample size, augmentation strength and noise scale.
//!
//! Work is split into units, one per `(n, lambda_gamma_max, seed)`; each
//! unit draws its dataset once and evaluates every method and `alpha` on
//! it. Units share nothing and seed their own streams, and rows are sorted
//! before writing, so the output does not depend on the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sslab_core::augmentation::MomentPair;
use sslab_core::datamodel::io::{ingest_csv, ingest_idx};
use sslab_core::datamodel::{
    build_corrupted_benchmark_from_projection, synth_dataset, synth_labels, BenchmarkParams, DataModel, PcaEmbedding,
    SpectralSpec,
};
use sslab_core::evalx::{fit_probe_with, represent, ProbeOptions};
use sslab_core::rng::{derive_seed, stream_rng};
use sslab_core::solvers::{solve_joint_embedding_with, solve_reconstruction_moments, solve_supervised_moments};
use sslab_core::spectral::{row_space_distance, second_moment};
use sslab_core::theory::threshold_report;
use sslab_core::{DMatrix, Method, SolveOptions};

use crate::config::{resolve_data_path, DatasetConfig, SweepConfig};
use crate::error::{CliError, Result};

/// CSV header, in column order.
pub const COLUMNS: [&str; 17] = [
    "method",
    "dataset_id",
    "n",
    "alpha",
    "lambda_gamma_max",
    "lambda_theta_max",
    "seed",
    "k",
    "d",
    "probe_loss_clean",
    "probe_loss_corrupted",
    "probe_gap",
    "subspace_dist",
    "alpha_je",
    "alpha_rc",
    "regime",
    "error",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub dataset_id: String,
    pub n: usize,
    pub alpha: f64,
    pub lambda_gamma_max: f64,
    pub lambda_theta_max: f64,
    pub seed: u64,
    pub k: usize,
    pub d: usize,
    pub probe_loss_clean: f64,
    pub probe_loss_corrupted: f64,
    pub probe_gap: f64,
    pub subspace_dist: f64,
    pub alpha_je: f64,
    pub alpha_rc: f64,
    /// Regime name, or `NaN` when the spec admits no threshold analysis.
    pub regime: String,
    pub error: Option<String>,
}

/// The spec a unit's rows were computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub n: usize,
    pub lambda_gamma_max: f64,
    pub seed: u64,
    pub spec: Option<SpectralSpec>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub specs: Vec<SpecRecord>,
}

/// Loaded data, before any per-unit sampling.
#[derive(Clone, Debug)]
pub enum Source {
    Synthetic { spec: SpectralSpec, label_dim: usize },
    /// Rows already projected onto the leading principal axes of the full dataset.
    Embedded { projected: DMatrix<f64>, labels: Vec<usize>, params: BenchmarkParams },
}

impl Source {
    pub fn load(dataset: &DatasetConfig) -> Result<Self> {
        let (raw, labels, params) = match dataset {
            DatasetConfig::Synthetic { spec, label_dim } => {
                return Ok(Source::Synthetic { spec: spec.clone(), label_dim: *label_dim });
            }
            DatasetConfig::Idx { images, labels, benchmark } => {
                let (raw, labels) = ingest_idx(resolve_data_path(images), resolve_data_path(labels))?;
                (raw, labels, benchmark)
            }
            DatasetConfig::Csv { path, label_column, benchmark } => {
                let (raw, labels) = ingest_csv(resolve_data_path(path), label_column)?;
                (raw, labels, benchmark)
            }
        };
        log::info!("fitting a {}-component PCA on {} x {} inputs", params.pca_dim, raw.nrows(), raw.ncols());
        let embedding = PcaEmbedding::fit(&raw, params.pca_dim)?;
        let projected = embedding.project(&raw)?;
        Ok(Source::Embedded { projected, labels, params: params.clone() })
    }

    /// Ambient dimension of every generated dataset.
    pub fn dim(&self) -> usize {
        match self {
            Source::Synthetic { spec, .. } => spec.d,
            Source::Embedded { params, .. } => params.pca_dim + params.noise_dims,
        }
    }
}

/// One dataset draw with its regression targets.
#[derive(Clone, Debug)]
pub struct Instance {
    pub model: DataModel,
    pub y: DMatrix<f64>,
    pub lambda_theta_max: f64,
}

fn unit_seed(seed: u64, n: usize, lambda_gamma_max: f64) -> u64 {
    derive_seed(seed, &[n as u64, lambda_gamma_max.to_bits()])
}

/// Synthetic noise spectra are rescaled so their largest entry equals
/// `lambda_gamma_max`.
pub fn build_instance(source: &Source, n: usize, lambda_gamma_max: f64, seed: u64) -> sslab_core::Result<Instance> {
    let unit = unit_seed(seed, n, lambda_gamma_max);
    match source {
        Source::Synthetic { spec, label_dim } => {
            let mut spec = spec.clone();
            spec.validate()?;
            let top = spec.lambda_gamma[spec.k..].iter().copied().fold(0.0, f64::max);
            for g in &mut spec.lambda_gamma[spec.k..] {
                *g *= lambda_gamma_max / top;
            }
            spec.n = n;
            spec.seed = unit;
            let mut model = synth_dataset(&spec)?;
            let y = synth_labels(&model, *label_dim, unit);
            model.labels = Some(y.clone());
            let lambda_theta_max = spec.lambda_theta.iter().copied().fold(0.0, f64::max);
            Ok(Instance { model, y, lambda_theta_max })
        }
        Source::Embedded { projected, labels, params } => {
            let total = projected.nrows();
            if n > total {
                return Err(sslab_core::Error::InsufficientSamples(format!("{n} samples requested, dataset has {total}")));
            }
            let mut rows = sample(&mut stream_rng(seed, &[n as u64]), total, n).into_vec();
            rows.sort_unstable();
            let subset = projected.select_rows(rows.iter());
            let subset_labels: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            let params = BenchmarkParams { lambda_gamma_max, seed: unit, ..params.clone() };
            let bench = build_corrupted_benchmark_from_projection(&subset, &subset_labels, &params)?;
            let y = bench.model.labels.clone().expect("benchmarks carry labels");
            Ok(Instance { model: bench.model, y, lambda_theta_max: params.lambda_theta_max })
        }
    }
}

/// Per-sample moments of one side (clean or corrupted) of an instance.
struct Side<'a> {
    x: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
}

impl<'a> Side<'a> {
    fn new(x: &'a DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let cross = y.transpose() * x / x.nrows() as f64;
        Side { x, gram: second_moment(x), cross }
    }

    fn encoder(&self, method: Method, sigma: &DMatrix<f64>, k: usize, opts: SolveOptions) -> sslab_core::Result<DMatrix<f64>> {
        let s = &self.gram + sigma;
        Ok(match method {
            Method::Supervised => solve_supervised_moments(&self.cross, &s, opts)?.v,
            Method::JointEmbedding => solve_joint_embedding_with(&MomentPair { s, g: self.gram.clone() }, k, opts)?.w,
            Method::Reconstruction => solve_reconstruction_moments(&MomentPair { s, g: self.gram.clone() }, k, opts)?.encoder,
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Metrics {
    loss_clean: f64,
    loss_corrupted: f64,
    subspace_dist: f64,
}

impl Metrics {
    const FAILED: Metrics = Metrics { loss_clean: f64::NAN, loss_corrupted: f64::NAN, subspace_dist: f64::NAN };
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    method: Method,
    alpha: f64,
    instance: &Instance,
    clean: &Side,
    corrupted: &Side,
    k: usize,
    probe: &ProbeOptions,
    opts: SolveOptions,
) -> sslab_core::Result<Metrics> {
    let sigma = instance.model.augmentation(alpha)?.covariance();
    let loss = |side: &Side, encoder: &DMatrix<f64>| -> sslab_core::Result<f64> {
        let fit = fit_probe_with(&represent(encoder, side.x)?, &instance.y, probe)?;
        Ok(fit.holdout_loss.unwrap_or(fit.loss))
    };
    let e_clean = clean.encoder(method, &sigma, k, opts)?;
    let e_corrupted = corrupted.encoder(method, &sigma, k, opts)?;
    Ok(Metrics {
        loss_clean: loss(clean, &e_clean)?,
        loss_corrupted: loss(corrupted, &e_corrupted)?,
        subspace_dist: row_space_distance(&e_clean, &e_corrupted)?,
    })
}

#[derive(Clone, Copy, Debug)]
struct GridPoint {
    n: usize,
    lambda_gamma_max: f64,
    seed: u64,
}

fn run_unit(config: &SweepConfig, source: &Source, point: GridPoint) -> (Vec<Vec<SweepRow>>, SpecRecord) {
    let GridPoint { n, lambda_gamma_max, seed } = point;
    let opts = config.solve_options();
    let instance = build_instance(source, n, lambda_gamma_max, seed);
    let (spec, unit_error) = match &instance {
        Ok(inst) => (Some(inst.model.spec.clone()), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = spec.as_ref().and_then(|s| threshold_report(s).ok());
    let sides = instance.as_ref().ok().map(|inst| (Side::new(&inst.model.x_clean, &inst.y), Side::new(&inst.model.x_corrupt, &inst.y)));

    let rows = config
        .methods
        .iter()
        .map(|&method| {
            config
                .alpha_grid
                .iter()
                .map(|&alpha| {
                    let outcome = match (&instance, &sides) {
                        (Ok(inst), Some((clean, corrupted))) => {
                            evaluate(method, alpha, inst, clean, corrupted, config.k, &config.probe, opts).map_err(|e| e.to_string())
                        }
                        _ => Err(unit_error.clone().unwrap_or_default()),
                    };
                    if let Err(e) = &outcome {
                        log::warn!("{method} n={n} alpha={alpha} lambda_gamma_max={lambda_gamma_max} seed={seed}: {e}");
                    }
                    let metrics = *outcome.as_ref().unwrap_or(&Metrics::FAILED);
                    SweepRow {
                        method,
                        dataset_id: config.dataset_id.clone(),
                        n,
                        alpha,
                        lambda_gamma_max,
                        lambda_theta_max: instance.as_ref().map_or(f64::NAN, |i| i.lambda_theta_max),
                        seed,
                        k: config.k,
                        d: source.dim(),
                        probe_loss_clean: metrics.loss_clean,
                        probe_loss_corrupted: metrics.loss_corrupted,
                        probe_gap: (metrics.loss_clean - metrics.loss_corrupted).abs(),
                        subspace_dist: metrics.subspace_dist,
                        alpha_je: report.as_ref().map_or(f64::NAN, |r| r.alpha_je),
                        alpha_rc: report.as_ref().map_or(f64::NAN, |r| r.alpha_rc),
                        regime: report.as_ref().map_or_else(|| "NaN".to_string(), |r| r.regime.to_string()),
                        error: outcome.err(),
                    }
                })
                .collect()
        })
        .collect();
    log::info!("finished n={n} lambda_gamma_max={lambda_gamma_max} seed={seed}");
    (rows, SpecRecord { n, lambda_gamma_max, seed, spec, error: unit_error })
}

/// Runs the whole grid on `threads` workers (all cores when `None`).
pub fn run_sweep(config: &SweepConfig, source: &Source, threads: Option<usize>) -> Result<SweepOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;

    let mut points = Vec::new();
    for (ni, &n) in config.n_grid.iter().enumerate() {
        for (li, &lambda_gamma_max) in config.lambda_gamma_max_grid.iter().enumerate() {
            for (si, &seed) in config.seeds.iter().enumerate() {
                points.push(((ni, li, si), GridPoint { n, lambda_gamma_max, seed }));
            }
        }
    }
    let units: Vec<_> = pool.install(|| points.par_iter().map(|(_, p)| run_unit(config, source, *p)).collect());

    // Lexicographic order over (method, n, alpha, lambda_gamma_max, seed).
    let mut keyed = Vec::new();
    let mut specs = Vec::new();
    for (((ni, li, si), _), (rows, spec)) in points.iter().zip(units) {
        for (mi, per_alpha) in rows.into_iter().enumerate() {
            for (ai, row) in per_alpha.into_iter().enumerate() {
                keyed.push(((mi, *ni, ai, *li, *si), row));
            }
        }
        specs.push(spec);
    }
    keyed.sort_by_key(|(key, _)| *key);
    Ok(SweepOutput { rows: keyed.into_iter().map(|(_, row)| row).collect(), specs })
}

/// Serializes rows with a header line and LF line endings.
pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    writer.write_record(COLUMNS)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| CliError::io("<csv>", e))?;
    Ok(())
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf)?;
    Ok(buf)
}

/// `sweep.csv` -> `sweep.specs.json`.
pub fn specs_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("specs.json")
}

/// Runs the sweep and writes the CSV plus the per-unit spec sidecar.
pub fn cmd_sweep(config: &SweepConfig, threads: Option<usize>, out: &Path) -> Result<SweepOutput> {
    let source = Source::load(&config.dataset)?;
    let output = run_sweep(config, &source, threads)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(out, rows_to_csv(&output.rows)?).map_err(|e| CliError::io(out, e))?;
    let sidecar = specs_path(out);
    std::fs::write(&sidecar, serde_json::to_vec_pretty(&output.specs)?).map_err(|e| CliError::io(&sidecar, e))?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests::synthetic;

    fn source(config: &SweepConfig) -> Source {
        Source::load(&config.dataset).unwrap()
    }

    #[test]
    fn row_count_matches_grid() {
        let mut config = synthetic();
        config.n_grid = vec![20, 40, 80];
        config.alpha_grid = vec![0.0, 0.5, 2.0];
        config.lambda_gamma_max_grid = vec![1.0, 10.0];
        let out = run_sweep(&config, &source(&config), Some(1)).unwrap();
        assert_eq!(out.rows.len(), 3 * 3 * 2);
        assert_eq!(out.specs.len(), 3 * 2);
        assert!(out.rows.iter().all(|r| r.error.is_none()));
    }

    #[test]
    fn rows_follow_grid_order() {
        let mut config = synthetic();
        config.methods = vec![Method::Reconstruction, Method::Supervised];
        config.n_grid = vec![30, 20];
        config.seeds = vec![5, 2];
        let rows = run_sweep(&config, &source(&config), Some(2)).unwrap().rows;
        let keys: Vec<_> = rows.iter().map(|r| (r.method, r.n, r.alpha, r.seed)).collect();
        assert_eq!(keys[0], (Method::Reconstruction, 30, 0.0, 5));
        assert_eq!(keys[1], (Method::Reconstruction, 30, 0.0, 2));
        assert_eq!(keys[2], (Method::Reconstruction, 30, 1.0, 5));
        assert_eq!(keys[4], (Method::Reconstruction, 20, 0.0, 5));
        assert_eq!(keys[8].0, Method::Supervised);
    }

    #[test]
    fn gap_is_the_loss_difference() {
        let config = synthetic();
        for row in run_sweep(&config, &source(&config), Some(1)).unwrap().rows {
            assert_eq!(row.probe_gap, (row.probe_loss_clean - row.probe_loss_corrupted).abs());
        }
    }

    #[test]
    fn failed_points_are_recorded() {
        let mut config = synthetic();
        // Fewer samples than dimensions cannot be synthesized.
        config.n_grid = vec![2, 50];
        let rows = run_sweep(&config, &source(&config), Some(1)).unwrap().rows;
        assert_eq!(rows.len(), 4);
        let failed: Vec<_> = rows.iter().filter(|r| r.error.is_some()).collect();
        assert_eq!(failed.len(), 2);
        assert!(failed.iter().all(|r| r.n == 2 && r.probe_gap.is_nan()));
        let text = String::from_utf8(rows_to_csv(&rows).unwrap()).unwrap();
        assert!(text.contains(",NaN,"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    }

    #[test]
    fn output_is_independent_of_thread_count() {
        let mut config = synthetic();
        config.methods = Method::ALL.to_vec();
        config.n_grid = vec![20, 40];
        config.seeds = vec![1, 2, 3];
        let src = source(&config);
        let one = rows_to_csv(&run_sweep(&config, &src, Some(1)).unwrap().rows).unwrap();
        let three = rows_to_csv(&run_sweep(&config, &src, Some(3)).unwrap().rows).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn csv_round_trips() {
        let config = synthetic();
        let rows = run_sweep(&config, &source(&config), Some(1)).unwrap().rows;
        let bytes = rows_to_csv(&rows).unwrap();
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let back: Vec<SweepRow> = reader.deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn synthetic_noise_is_rescaled() {
        let config = synthetic();
        let inst = build_instance(&source(&config), 30, 7.0, 1).unwrap();
        assert_eq!(inst.model.spec.lambda_gamma, vec![0.0, 0.0, 7.0, 3.5]);
        assert_eq!(inst.model.n(), 30);
    }
}
