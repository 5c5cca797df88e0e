//! Optimizer kernels: the momentum update `U(g, η, μ)`, delay compensation
//! with the pseudo-Hessian `g ⊙ g ⊙ v`, the dynamic variance-control scale,
//! iteration-indexed schedules, weight decay and plateau detection.

mod compensation;
mod momentum;
mod plateau;
mod schedule;

use thiserror::Error;

use crate::vecmath::VecError;

pub use compensation::{
    apply_weight_decay, compensate, compensate_with_curvature, dynamic_lambda, CompensationConfig,
    DEFAULT_LAMBDA0, LAMBDA_DENOMINATOR_FLOOR,
};
pub use momentum::MomentumState;
pub use plateau::{detect_plateau, PlateauConfig};
pub use schedule::{theoretical_lr, Schedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error(transparent)]
    Vec(#[from] VecError),
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("iteration {iteration} outside schedule of {total} iterations")]
    IterationOutOfRange { iteration: u64, total: u64 },
    #[error("loss history has {have} epochs but current epoch is {need}")]
    InsufficientHistory { have: usize, need: usize },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> OptimError {
    OptimError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
