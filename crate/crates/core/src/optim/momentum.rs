use super::{invalid, OptimError};
use crate::vecmath::ParamVector;

/// Heavy-ball momentum: `v ← μ·v + g`, `Δw = −η·v`.
///
/// With `μ = 0` this is exactly the plain step `Δw = −η·g`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    velocity: ParamVector,
    eta: f64,
    mu: f64,
}

impl MomentumState {
    /// Zero velocity shaped like `template`.
    pub fn new(template: &ParamVector, eta: f64, mu: f64) -> Result<Self, OptimError> {
        if !(0.0..1.0).contains(&mu) {
            return Err(invalid("momentum", format!("{mu} is outside [0, 1)")));
        }
        let mut state = Self {
            velocity: template.zeros_like(),
            eta: 0.0,
            mu,
        };
        state.set_eta(eta)?;
        Ok(state)
    }

    pub fn set_eta(&mut self, eta: f64) -> Result<(), OptimError> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(invalid(
                "learning rate",
                format!("{eta} must be finite and >= 0"),
            ));
        }
        self.eta = eta;
        Ok(())
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn velocity(&self) -> &ParamVector {
        &self.velocity
    }

    /// Folds `gradient` into the velocity and returns the update `Δw`.
    pub fn update(&mut self, gradient: &ParamVector) -> Result<ParamVector, OptimError> {
        gradient.check_finite()?;
        self.velocity = self.velocity.axpy(self.mu, gradient)?;
        Ok(self.velocity.scale(-self.eta)?)
    }
}
