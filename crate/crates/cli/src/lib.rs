//! Experiment runner for the `sslab` binary: sweeps, threshold reports,
//! verification suites and plots.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod sweep;
pub mod verify;

pub use config::{DatasetConfig, SweepConfig};
pub use error::{CliError, Result};
pub use sweep::{SweepOutput, SweepRow};
