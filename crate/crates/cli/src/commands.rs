//! The non-sweep subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sslab_core::datamodel::io::{ingest_csv, ingest_idx, save_model, write_csv, write_matrix};
use sslab_core::datamodel::SpectralSpec;
use sslab_core::theory::threshold_report;
use sslab_core::ThresholdReport;

use crate::config::SweepConfig;
use crate::error::{CliError, Result};
use crate::sweep::{build_instance, Source};

/// Materializes the dataset of the first grid point (or `seed`, if given).
pub fn cmd_generate(config: &SweepConfig, seed: Option<u64>, out: &Path) -> Result<PathBuf> {
    let source = Source::load(&config.dataset)?;
    let seed = seed.unwrap_or(config.seeds[0]);
    let instance = build_instance(&source, config.n_grid[0], config.lambda_gamma_max_grid[0], seed)?;
    Ok(save_model(&instance.model, out)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutput {
    pub spec: SpectralSpec,
    pub report: ThresholdReport,
}

pub fn load_spec(path: &Path) -> Result<SpectralSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn cmd_thresholds(spec: &SpectralSpec) -> Result<ThresholdOutput> {
    Ok(ThresholdOutput { spec: spec.clone(), report: threshold_report(spec)? })
}

pub fn format_report(report: &ThresholdReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "delta            {:.6}", report.delta);
    let _ = writeln!(text, "eta              {:.6}", report.eta);
    let _ = writeln!(text, "alpha_je^2 (raw) {:.6}", report.alpha_je_sq_raw);
    let _ = writeln!(text, "alpha_rc^2 (raw) {:.6}", report.alpha_rc_sq_raw);
    let _ = writeln!(text, "alpha_je         {:.4}", report.alpha_je);
    let _ = writeln!(text, "alpha_rc         {:.4}", report.alpha_rc);
    let _ = writeln!(text, "crossover        {:.6}", report.crossover);
    let _ = writeln!(text, "regime           {}", report.regime);
    text
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub features: usize,
    pub classes: usize,
    pub outputs: Vec<PathBuf>,
}

/// Reads IDX (with `labels`) or CSV (with `label_column`) input. Writes a
/// CSV when `out` ends in `.csv`, otherwise a directory holding
/// `features.bin` and `labels.json`.
pub fn cmd_ingest(input: &Path, labels: Option<&Path>, label_column: Option<&str>, out: &Path) -> Result<IngestSummary> {
    let (features, classes) = match (labels, label_column) {
        (Some(labels), None) => ingest_idx(input, labels)?,
        (None, Some(column)) => ingest_csv(input, column)?,
        _ => return Err(CliError::Config("pass exactly one of --labels (IDX) or --label-column (CSV)".into())),
    };
    let outputs = if out.extension().is_some_and(|e| e == "csv") {
        write_csv(out, &features, &classes)?;
        vec![out.to_path_buf()]
    } else {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let matrix = out.join("features.bin");
        write_matrix(&matrix, &features)?;
        let label_path = out.join("labels.json");
        std::fs::write(&label_path, serde_json::to_vec(&classes)?).map_err(|e| CliError::io(&label_path, e))?;
        vec![matrix, label_path]
    };
    Ok(IngestSummary {
        rows: features.nrows(),
        features: features.ncols(),
        classes: classes.iter().max().map_or(0, |m| m + 1),
        outputs,
    })
}
