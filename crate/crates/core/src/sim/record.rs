use serde::{Deserialize, Serialize};

use super::Algorithm;
use crate::models::ModelKind;
use crate::vecmath::ParamVector;

/// One global iteration (or parameter-server update for DC-ASGD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: u64,
    /// Simulated time at which the iteration's update was complete.
    pub simulated_time: f64,
    /// Mean batch loss over the workers that contributed.
    pub train_loss: f64,
    pub train_error: f64,
    pub mean_lambda: f64,
    /// Largest `|D|` element over all contributing workers.
    pub max_abs_d: f64,
    /// Norm of the mean raw gradient.
    pub grad_norm: f64,
    pub learning_rate: f64,
    pub val_loss: Option<f64>,
    pub val_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: Algorithm,
    pub n_workers: usize,
    pub local_batch_size: usize,
    pub model_kind: ModelKind,
    pub model_dimension: usize,
    pub seed: u64,
    /// Rows that make up one pass over the training data.
    pub rows_per_epoch: u64,
}

/// Headline numbers of a run, all computed from its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub completed_iterations: u64,
    /// Mean of `train_loss` over the last epoch's rows.
    pub final_train_loss: f64,
    pub final_train_error: f64,
    pub final_val_loss: Option<f64>,
    pub final_val_error: Option<f64>,
    pub total_simulated_time: f64,
    /// Mean simulated time per row.
    pub time_per_iteration: f64,
    pub diverged_at: Option<u64>,
    pub warmup_stopped_at: Option<u64>,
    pub mean_lambda: f64,
    /// DC-ASGD only: mean server updates between fetch and arrival.
    pub mean_staleness: Option<f64>,
    /// DC-ASGD only: mean `‖w_PS − w_worker‖` at arrival.
    pub mean_server_distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<IterationRow>,
    pub summary: RunSummary,
    /// Shared weights at the end: the drained average for DC-S3GD, the common
    /// replica for SSGD and the server weights for DC-ASGD.
    pub final_weights: ParamVector,
    /// Host time spent simulating.
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.summary.diverged_at.is_some()
    }
}

pub(crate) fn summarize(
    rows: &[IterationRow],
    rows_per_epoch: u64,
    diverged_at: Option<u64>,
    warmup_stopped_at: Option<u64>,
    async_stats: Option<(f64, f64)>,
) -> RunSummary {
    let n = rows.len();
    let tail = &rows[n.saturating_sub(rows_per_epoch.max(1) as usize)..];
    let mean = |f: fn(&IterationRow) -> f64, rows: &[IterationRow]| {
        if rows.is_empty() {
            f64::NAN
        } else {
            rows.iter().map(f).sum::<f64>() / rows.len() as f64
        }
    };
    let last_eval = rows.iter().rev().find(|r| r.val_error.is_some());
    let total = rows.last().map_or(0.0, |r| r.simulated_time);
    RunSummary {
        completed_iterations: n as u64,
        final_train_loss: mean(|r| r.train_loss, tail),
        final_train_error: mean(|r| r.train_error, tail),
        final_val_loss: last_eval.and_then(|r| r.val_loss),
        final_val_error: last_eval.and_then(|r| r.val_error),
        total_simulated_time: total,
        time_per_iteration: if n == 0 { 0.0 } else { total / n as f64 },
        diverged_at,
        warmup_stopped_at,
        mean_lambda: mean(|r| r.mean_lambda, rows),
        mean_staleness: async_stats.map(|s| s.0),
        mean_server_distance: async_stats.map(|s| s.1),
    }
}
