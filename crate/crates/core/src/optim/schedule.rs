use serde::{Deserialize, Serialize};

use super::{invalid, OptimError};

/// Piecewise-linear trajectory over iterations: `start → peak` on
/// `[0, warmup_end]`, then `peak → end` on `[warmup_end, total]`.
///
/// Values at the three knots are exact. With `warmup_end == 0` there is no
/// warm-up and iteration 0 takes `peak`; with `warmup_end == total` there is
/// no decay segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_iterations: u64,
    pub warmup_end_iteration: u64,
    pub start_value: f64,
    pub peak_value: f64,
    pub end_value: f64,
}

impl Schedule {
    pub fn new(
        total_iterations: u64,
        warmup_end_iteration: u64,
        start_value: f64,
        peak_value: f64,
        end_value: f64,
    ) -> Result<Self, OptimError> {
        if warmup_end_iteration > total_iterations {
            return Err(invalid(
                "warmup_end_iteration",
                format!("{warmup_end_iteration} exceeds total {total_iterations}"),
            ));
        }
        for (name, v) in [
            ("start_value", start_value),
            ("peak_value", peak_value),
            ("end_value", end_value),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(Self {
            total_iterations,
            warmup_end_iteration,
            start_value,
            peak_value,
            end_value,
        })
    }

    /// A flat schedule.
    pub fn constant(total_iterations: u64, value: f64) -> Result<Self, OptimError> {
        Self::new(total_iterations, 0, value, value, value)
    }

    pub fn value(&self, iteration: u64) -> Result<f64, OptimError> {
        let (total, warm) = (self.total_iterations, self.warmup_end_iteration);
        if iteration > total {
            return Err(OptimError::IterationOutOfRange { iteration, total });
        }
        if iteration < warm {
            let f = iteration as f64 / warm as f64;
            Ok(lerp(self.start_value, self.peak_value, f))
        } else if iteration == warm || total == warm {
            Ok(self.peak_value)
        } else {
            let f = (iteration - warm) as f64 / (total - warm) as f64;
            Ok(lerp(self.peak_value, self.end_value, f))
        }
    }

    pub fn in_warmup(&self, iteration: u64) -> bool {
        iteration < self.warmup_end_iteration
    }

    /// Ends the warm-up at `iteration`, freezing the value reached there as
    /// the new peak; the decay then spans all remaining iterations.
    pub fn stop_warmup_at(&self, iteration: u64) -> Result<Self, OptimError> {
        if iteration > self.warmup_end_iteration {
            return Err(invalid(
                "iteration",
                format!(
                    "{iteration} is past the warm-up end {}",
                    self.warmup_end_iteration
                ),
            ));
        }
        let reached = self.value(iteration)?;
        Self::new(
            self.total_iterations,
            iteration,
            self.start_value,
            reached,
            self.end_value,
        )
    }

    /// Same shape with every value multiplied by `peak / self.peak_value`.
    pub fn scaled_to_peak(&self, peak: f64) -> Result<Self, OptimError> {
        if self.peak_value == 0.0 {
            if peak == 0.0 {
                return Ok(*self);
            }
            return Err(invalid(
                "peak_value",
                "cannot rescale a schedule with zero peak",
            ));
        }
        let factor = peak / self.peak_value;
        Self::new(
            self.total_iterations,
            self.warmup_end_iteration,
            self.start_value * factor,
            peak,
            self.end_value * factor,
        )
    }

    /// Largest change between adjacent iterations allowed by the two slopes.
    pub fn max_step(&self) -> f64 {
        let warm = self.warmup_end_iteration;
        let up = if warm > 0 {
            (self.peak_value - self.start_value).abs() / warm as f64
        } else {
            0.0
        };
        let decay_len = self.total_iterations - warm;
        let down = if decay_len > 0 {
            (self.peak_value - self.end_value).abs() / decay_len as f64
        } else {
            0.0
        };
        up.max(down)
    }
}

/// `a·(1 − f) + b·f`, exact at `f = 0` and `f = 1`.
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a * (1.0 - f) + b * f
}

/// `η_theo = N · η_sn`.
pub fn theoretical_lr(n_workers: usize, eta_single_node: f64) -> Result<f64, OptimError> {
    if n_workers == 0 {
        return Err(invalid("n_workers", "must be at least 1"));
    }
    if !(eta_single_node > 0.0 && eta_single_node.is_finite()) {
        return Err(invalid(
            "eta_single_node",
            format!("{eta_single_node} must be > 0"),
        ));
    }
    Ok(n_workers as f64 * eta_single_node)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knots_are_exact() {
        let s = Schedule::new(40, 10, 0.1, 0.7, 0.03).unwrap();
        assert_eq!(s.value(0).unwrap(), 0.1);
        assert_eq!(s.value(10).unwrap(), 0.7);
        assert_eq!(s.value(40).unwrap(), 0.03);
    }

    #[test]
    fn midpoint_of_decay() {
        let s = Schedule::new(40, 10, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(s.value(25).unwrap(), 0.5);
    }

    #[test]
    fn out_of_range_and_invalid() {
        let s = Schedule::new(40, 10, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            s.value(41),
            Err(OptimError::IterationOutOfRange {
                iteration: 41,
                total: 40
            })
        ));
        assert!(Schedule::new(10, 11, 0.0, 1.0, 0.0).is_err());
        assert!(Schedule::new(10, 5, -1.0, 1.0, 0.0).is_err());
        assert!(Schedule::new(10, 5, 0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn degenerate_segments() {
        let no_warm = Schedule::new(10, 0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(no_warm.value(0).unwrap(), 2.0);
        assert_eq!(no_warm.value(10).unwrap(), 1.0);
        let no_decay = Schedule::new(10, 10, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(no_decay.value(10).unwrap(), 2.0);
        assert_eq!(no_decay.value(5).unwrap(), 1.0);
    }

    #[test]
    fn early_stop_keeps_reached_value() {
        let s = Schedule::new(100, 50, 0.1, 1.0, 0.0).unwrap();
        let stopped = s.stop_warmup_at(20).unwrap();
        assert_eq!(stopped.value(20).unwrap(), s.value(20).unwrap());
        assert_eq!(stopped.peak_value, s.value(20).unwrap());
        assert_eq!(stopped.value(100).unwrap(), 0.0);
        assert!(stopped.value(21).unwrap() < stopped.value(20).unwrap());
        assert!(s.stop_warmup_at(51).is_err());
    }

    #[test]
    fn theoretical_lr_scaling() {
        assert_eq!(theoretical_lr(1, 0.1).unwrap(), 0.1);
        assert!((theoretical_lr(64, 0.1).unwrap() - 6.4).abs() < 1e-12);
        assert!((theoretical_lr(64, 0.02).unwrap() - 1.28).abs() < 1e-12);
        assert!(theoretical_lr(0, 0.1).is_err());
        assert!(theoretical_lr(4, 0.0).is_err());
    }

    #[test]
    fn rescaling_preserves_shape() {
        let lr = Schedule::new(200, 100, 0.1, 0.8, 0.0).unwrap();
        let wd = lr.scaled_to_peak(0.0001 * 2.3).unwrap();
        assert_eq!(wd.peak_value, 0.0001 * 2.3);
        for t in 0..=200 {
            let expected = lr.value(t).unwrap() * (0.00023 / 0.8);
            assert!((wd.value(t).unwrap() - expected).abs() <= 1e-12 * expected.max(1e-12));
        }
    }
}
