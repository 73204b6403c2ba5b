use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sslab_core::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("CSV does not match the sweep schema: {0}")]
    SchemaMismatch(String),

    #[error("{failed} of {total} checks failed")]
    VerificationFailed { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 0 success, 1 verification or numerical failure, 2 usage, 3 IO.
    pub fn exit_code(&self) -> u8 {
        use sslab_core::Error as E;
        match self {
            CliError::VerificationFailed { .. } => 1,
            CliError::Config(_) | CliError::SchemaMismatch(_) => 2,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => 3,
            CliError::Core(e) => match e {
                E::SpecInvalid(_) | E::DimensionMismatch(_) | E::RankOutOfRange { .. } => 2,
                E::Io(_)
                | E::Csv(_)
                | E::Json(_)
                | E::BadMagic { .. }
                | E::TruncatedFile { .. }
                | E::CountMismatch { .. }
                | E::RaggedRows { .. }
                | E::NonNumericCell { .. }
                | E::Format(_) => 3,
                _ => 1,
            },
        }
    }
}
