use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{invalid, OptimError};
use crate::vecmath::{GroupId, ParamVector};

pub const DEFAULT_LAMBDA0: f64 = 0.2;

/// Denominators of the dynamic scale below this are treated as zero.
pub const LAMBDA_DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationConfig {
    pub lambda0: f64,
}

impl CompensationConfig {
    pub fn new(lambda0: f64) -> Result<Self, OptimError> {
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(invalid(
                "lambda0",
                format!("{lambda0} must be finite and >= 0"),
            ));
        }
        Ok(Self { lambda0 })
    }
}

impl Default for CompensationConfig {
    fn default() -> Self {
        Self {
            lambda0: DEFAULT_LAMBDA0,
        }
    }
}

/// `g̃ = g + λ · g ⊙ g ⊙ D`.
pub fn compensate(
    gradient: &ParamVector,
    distance: &ParamVector,
    lambda: f64,
) -> Result<ParamVector, OptimError> {
    check_lambda(lambda)?;
    let curvature = gradient.hadamard(gradient)?.hadamard(distance)?;
    Ok(curvature.axpy(lambda, gradient)?)
}

/// `g̃ = g + λ · (H D)` for a caller-supplied curvature product `H D`.
///
/// Used with an exact Hessian-vector product in place of the pseudo-Hessian.
pub fn compensate_with_curvature(
    gradient: &ParamVector,
    curvature_times_distance: &ParamVector,
    lambda: f64,
) -> Result<ParamVector, OptimError> {
    check_lambda(lambda)?;
    Ok(curvature_times_distance.axpy(lambda, gradient)?)
}

/// `λ = λ₀ ‖g‖ / ‖g ⊙ g ⊙ D‖`, or 0 when the denominator vanishes (the
/// correction term is then the zero vector for any finite λ).
pub fn dynamic_lambda(
    config: &CompensationConfig,
    gradient: &ParamVector,
    distance: &ParamVector,
) -> Result<f64, OptimError> {
    let denominator = gradient.hadamard(gradient)?.hadamard(distance)?.l2_norm()?;
    if denominator < LAMBDA_DENOMINATOR_FLOOR {
        return Ok(0.0);
    }
    let lambda = config.lambda0 * gradient.l2_norm()? / denominator;
    if !lambda.is_finite() {
        return Ok(0.0);
    }
    Ok(lambda)
}

/// Adds `decay · w` to the gradient for every element whose group is not in
/// `excluded`.
pub fn apply_weight_decay(
    gradient: &ParamVector,
    weights: &ParamVector,
    decay: f64,
    excluded: &BTreeSet<GroupId>,
) -> Result<ParamVector, OptimError> {
    if !(decay >= 0.0 && decay.is_finite()) {
        return Err(invalid(
            "weight decay",
            format!("{decay} must be finite and >= 0"),
        ));
    }
    if gradient.len() != weights.len() {
        return Err(crate::vecmath::VecError::LengthMismatch {
            left: gradient.len(),
            right: weights.len(),
        }
        .into());
    }
    if decay == 0.0 {
        return Ok(gradient.clone());
    }
    let values = gradient
        .values()
        .iter()
        .zip(weights.values())
        .zip(gradient.groups())
        .map(|((g, w), group)| {
            if excluded.contains(group) {
                *g
            } else {
                g + decay * w
            }
        })
        .collect();
    Ok(gradient.with_values(values)?)
}

fn check_lambda(lambda: f64) -> Result<(), OptimError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(
            "lambda",
            format!("{lambda} must be finite and >= 0"),
        ));
    }
    Ok(())
}
