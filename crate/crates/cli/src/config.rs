//! Sweep configuration files.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sslab_core::datamodel::{BenchmarkParams, SpectralSpec};
use sslab_core::evalx::ProbeOptions;
use sslab_core::Method;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Overrides the dataset cache directory.
pub const DATA_DIR_ENV: &str = "SSLAB_DATA_DIR";

/// `$SSLAB_DATA_DIR`, else `~/.cache/sslab`.
pub fn data_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".cache").join("sslab")
}

/// Relative dataset paths are looked up in [`data_dir`].
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        data_dir().join(path)
    }
}

fn default_label_dim() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    /// Gaussian data drawn from `spec`; `n`, the seed and the noise scale
    /// come from the sweep grid.
    Synthetic {
        spec: SpectralSpec,
        /// Number of linear targets `Y = X B^T`.
        #[serde(default = "default_label_dim")]
        label_dim: usize,
    },
    /// IDX image and label files (MNIST layout).
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        benchmark: BenchmarkParams,
    },
    /// Numeric CSV with a label column.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        benchmark: BenchmarkParams,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub dataset_id: String,
    pub dataset: DatasetConfig,
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub lambda_gamma_max_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Representation dimension of the self-supervised encoders.
    pub k: usize,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub probe: ProbeOptions,
    /// Reject ill-conditioned systems instead of adding ridge jitter.
    #[serde(default)]
    pub strict: bool,
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: SweepConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.methods.is_empty() || self.n_grid.is_empty() || self.alpha_grid.is_empty() {
            return fail("methods, n_grid and alpha_grid must be non-empty".into());
        }
        if self.lambda_gamma_max_grid.is_empty() || self.seeds.is_empty() {
            return fail("lambda_gamma_max_grid and seeds must be non-empty".into());
        }
        if self.methods.iter().collect::<HashSet<_>>().len() != self.methods.len() {
            return fail("methods must be distinct".into());
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return fail("seeds must be distinct".into());
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return fail(format!("alpha values must be finite and >= 0, found {a}"));
        }
        if let Some(l) = self.lambda_gamma_max_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return fail(format!("lambda_gamma_max values must be finite and > 0, found {l}"));
        }
        if self.n_grid.contains(&0) {
            return fail("sample sizes must be positive".into());
        }
        if self.k == 0 {
            return fail("k must be positive".into());
        }
        if self.dataset_id.is_empty() || self.dataset_id.contains([',', '"', '\n', '\r']) {
            return fail(format!("dataset_id {:?} must be non-empty plain text", self.dataset_id));
        }
        if let DatasetConfig::Synthetic { label_dim: 0, .. } = self.dataset {
            return fail("label_dim must be positive".into());
        }
        Ok(())
    }

    pub fn solve_options(&self) -> sslab_core::SolveOptions {
        if self.strict {
            sslab_core::SolveOptions::strict()
        } else {
            sslab_core::SolveOptions::jittered()
        }
    }
}
