//! Closed-form linear models for supervised learning with data augmentation,
//! reconstruction-based self-supervised learning and joint-embedding
//! self-supervised learning, together with the alignment thresholds that
//! decide when each one recovers the informative part of corrupted data.

pub mod augmentation;
pub mod datamodel;
pub mod error;
pub mod evalx;
pub mod oracle;
pub mod rng;
pub mod solvers;
pub mod spectral;
pub mod theory;

pub use augmentation::{AugmentationModel, MomentPair};
pub use datamodel::{DataModel, SpectralSpec};
pub use error::{Error, Result};
pub use evalx::{Encoder, ProbeResult};
pub use nalgebra::{DMatrix, DVector};
pub use solvers::{JESolution, RCSolution, SolveOptions, SupervisedSolution};
pub use theory::{Method, Regime, ThresholdReport};
