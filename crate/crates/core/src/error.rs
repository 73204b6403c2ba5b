use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} > tolerance {tolerance:.3e})")]
    NonSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is singular: eigenvalue {eigenvalue:.3e} <= threshold {threshold:.3e}")]
    SingularMatrix { eigenvalue: f64, threshold: f64 },

    #[error("system is singular or too ill-conditioned to solve: {0}")]
    SingularSystem(String),

    #[error("rank {k} out of range 1..={d}")]
    RankOutOfRange { k: usize, d: usize },

    #[error("basis columns are not orthonormal (defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty data matrix")]
    EmptyData,

    #[error("invalid spectral spec: {0}")]
    SpecInvalid(String),

    #[error("bad IDX magic number {found:#010x} in {path} (expected {expected:#010x})")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },

    #[error("truncated file {path}: {detail}")]
    TruncatedFile { path: PathBuf, detail: String },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("ragged CSV row {row}: expected {expected} fields, found {found}")]
    RaggedRows { row: usize, expected: usize, found: usize },

    #[error("non-numeric CSV cell at row {row}, column {column:?}: {value:?}")]
    NonNumericCell { row: usize, column: String, value: String },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("iterative solver did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("predicate does not change sign on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
