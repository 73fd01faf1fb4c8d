//! Maximum-likelihood estimation of positive-definite Toeplitz covariance
//! matrices through an overparameterized Carathéodory model fitted by
//! gradient descent.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curvature;
pub mod error;
pub mod harness;
pub mod likelihood;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod scenarios;

pub use error::{Error, Result};
pub use linalg::{HermitianFactor, HermitianMatrix, C64};
pub use model::{assemble_covariance, CaratheodoryModel};
pub use optimizer::{Algorithm, FitResult, OptimizerConfig, StepSize, Termination};
pub use scenarios::{SampleBatch, ScenarioKind, ScenarioSpec};
