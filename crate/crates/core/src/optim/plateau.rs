use serde::{Deserialize, Serialize};

use super::{invalid, OptimError};

/// Training-loss plateau rule checked at epoch boundaries during warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub window_epochs: usize,
    /// Minimum relative reduction of the windowed mean loss that still counts
    /// as progress.
    pub threshold: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            window_epochs: 5,
            threshold: 0.005,
        }
    }
}

impl PlateauConfig {
    pub fn detect(&self, loss_history: &[f64], current_epoch: usize) -> Result<bool, OptimError> {
        detect_plateau(
            loss_history,
            self.window_epochs,
            current_epoch,
            self.threshold,
        )
    }
}

/// `true` when the mean loss of the last `window` completed epochs is not
/// lower than the mean of the preceding window by more than `threshold`
/// (relative). The preceding window is truncated at the start of the history;
/// with no preceding epochs at all there is nothing to compare and the answer
/// is `false`.
///
/// `loss_history[e]` is the mean training loss of epoch `e`; `current_epoch`
/// is the number of completed epochs.
pub fn detect_plateau(
    loss_history: &[f64],
    window: usize,
    current_epoch: usize,
    threshold: f64,
) -> Result<bool, OptimError> {
    if window == 0 {
        return Err(invalid("window_epochs", "must be at least 1"));
    }
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(invalid(
            "threshold",
            format!("{threshold} must be finite and >= 0"),
        ));
    }
    if current_epoch < window {
        return Ok(false);
    }
    if loss_history.len() < current_epoch {
        return Err(OptimError::InsufficientHistory {
            have: loss_history.len(),
            need: current_epoch,
        });
    }
    let last = &loss_history[current_epoch - window..current_epoch];
    let previous = &loss_history[current_epoch.saturating_sub(2 * window)..current_epoch - window];
    if previous.is_empty() {
        return Ok(false);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (prev, cur) = (mean(previous), mean(last));
    let reduction = (prev - cur) / prev.abs().max(f64::MIN_POSITIVE);
    Ok(reduction <= threshold)
}
