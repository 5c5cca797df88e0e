//! Bookkeeping shared by the three algorithms: schedules, gradient
//! correction, rows, epoch boundaries and validation.

use std::time::Instant;

use super::record::{summarize, IterationRow, RunMeta, RunRecord};
use super::shard::{shard_ranges, ShardCursor, Sharding};
use super::{CompensationMode, Problem, RunSpec, SimError};
use crate::models::{BatchGradient, Sample};
use crate::optim::{
    apply_weight_decay, compensate, compensate_with_curvature, dynamic_lambda, Schedule,
};
use crate::vecmath::ParamVector;

pub(crate) struct Driver<'a> {
    pub spec: &'a RunSpec,
    pub problem: &'a Problem,
    learning_rate: Schedule,
    weight_decay: Schedule,
    rows: Vec<IterationRow>,
    rows_per_epoch: u64,
    epoch_loss_sum: f64,
    epoch_rows: u64,
    epoch_losses: Vec<f64>,
    warmup_stopped_at: Option<u64>,
    started: Instant,
}

impl<'a> Driver<'a> {
    pub fn new(spec: &'a RunSpec, problem: &'a Problem) -> Result<Self, SimError> {
        spec.cluster.validate()?;
        let dim = problem.model.dimension();
        if problem.initial_weights.len() != dim {
            return Err(SimError::Config(format!(
                "initial weights have {} elements, model has {dim}",
                problem.initial_weights.len()
            )));
        }
        problem.initial_weights.check_finite()?;
        let last = spec.max_iterations.saturating_sub(1);
        for (name, s) in [
            ("learning-rate", &spec.optimizer.learning_rate),
            ("weight-decay", &spec.optimizer.weight_decay),
        ] {
            if s.total_iterations < last {
                return Err(SimError::Config(format!(
                    "{name} schedule covers {} iterations, run needs {}",
                    s.total_iterations, spec.max_iterations
                )));
            }
        }
        Ok(Self {
            spec,
            problem,
            learning_rate: spec.optimizer.learning_rate,
            weight_decay: spec.optimizer.weight_decay,
            rows: Vec::new(),
            rows_per_epoch: 1,
            epoch_loss_sum: 0.0,
            epoch_rows: 0,
            epoch_losses: Vec::new(),
            warmup_stopped_at: None,
            started: Instant::now(),
        })
    }

    /// One cursor per worker. Also fixes how many rows (iterations, or server
    /// updates) make up an epoch.
    pub fn cursors(&mut self) -> Result<Vec<ShardCursor>, SimError> {
        let c = &self.spec.cluster;
        let ranges = shard_ranges(self.problem.train.len(), c.n_workers, c.sharding);
        let cursors = ranges
            .into_iter()
            .enumerate()
            .map(|(w, range)| {
                let tag = match c.sharding {
                    Sharding::Disjoint => w.to_string(),
                    Sharding::Replicated => "all".to_string(),
                };
                ShardCursor::new(range, c.local_batch_size, c.seed, tag, c.wraparound)
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.rows_per_epoch = super::rows_per_epoch(self.problem.train.len(), c);
        Ok(cursors)
    }

    pub fn batch(&self, indices: &[usize]) -> Vec<&'a Sample> {
        indices
            .iter()
            .map(|&i| &self.problem.train.samples[i])
            .collect()
    }

    pub fn learning_rate(&self, iteration: u64) -> Result<f64, SimError> {
        Ok(self.learning_rate.value(iteration)?)
    }

    /// Weight decay, compensation and scale for one gradient.
    ///
    /// Returns the corrected gradient and the `λ` used (0 without a
    /// distance). Decay is folded into the gradient before compensation, so
    /// the correction sees the full objective.
    pub fn corrected_gradient(
        &self,
        iteration: u64,
        weights: &ParamVector,
        gradient: &BatchGradient,
        distance: Option<&ParamVector>,
        batch: &[&Sample],
    ) -> Result<(ParamVector, f64), SimError> {
        let decay = self.weight_decay.value(iteration)?;
        let excluded = &self.spec.optimizer.decay_excluded_groups;
        let g = apply_weight_decay(&gradient.gradient, weights, decay, excluded)?;
        let Some(d) = distance else {
            return Ok((g, 0.0));
        };
        match self.spec.compensation {
            CompensationMode::Disabled => Ok((g, 0.0)),
            CompensationMode::PseudoHessian(cfg) => {
                let lambda = dynamic_lambda(&cfg, &g, d)?;
                Ok((compensate(&g, d, lambda)?, lambda))
            }
            CompensationMode::ExactHessian => {
                let hvp = self.problem.model.exact_hessian_vector(weights, batch, d)?;
                // The decay term contributes `decay · I` on decayed groups.
                let hvp = apply_weight_decay(&hvp, d, decay, excluded)?;
                Ok((compensate_with_curvature(&g, &hvp, 1.0)?, 1.0))
            }
        }
    }

    /// Appends the next row; at epoch boundaries during warm-up, checks the
    /// plateau rule and ends the warm-up early if the loss has stalled.
    pub fn push_row(&mut self, row: IterationRow) -> Result<(), SimError> {
        if row.iteration != self.rows.len() as u64 {
            return Err(SimError::Protocol(format!(
                "row {} recorded out of order (expected {})",
                row.iteration,
                self.rows.len()
            )));
        }
        let next = row.iteration + 1;
        self.epoch_loss_sum += row.train_loss;
        self.epoch_rows += 1;
        self.rows.push(row);
        if self.epoch_rows < self.rows_per_epoch {
            return Ok(());
        }
        self.epoch_losses
            .push(self.epoch_loss_sum / self.epoch_rows as f64);
        self.epoch_loss_sum = 0.0;
        self.epoch_rows = 0;
        let Some(plateau) = self.spec.optimizer.plateau else {
            return Ok(());
        };
        let epochs = self.epoch_losses.len();
        if self.learning_rate.in_warmup(next)
            && epochs.is_multiple_of(plateau.window_epochs)
            && plateau.detect(&self.epoch_losses, epochs)?
        {
            self.learning_rate = self.learning_rate.stop_warmup_at(next)?;
            if self.weight_decay.in_warmup(next) {
                self.weight_decay = self.weight_decay.stop_warmup_at(next)?;
            }
            self.warmup_stopped_at = Some(next);
        }
        Ok(())
    }

    pub fn wants_eval(&self, iteration: u64) -> bool {
        let k = self.spec.eval_interval;
        iteration + 1 == self.spec.max_iterations || (k > 0 && (iteration + 1).is_multiple_of(k))
    }

    /// Attaches validation loss and error at `weights` to an existing row.
    pub fn record_eval(&mut self, iteration: u64, weights: &ParamVector) -> Result<(), SimError> {
        if self.problem.validation.is_empty() {
            return Ok(());
        }
        let (loss, error) = self
            .problem
            .model
            .evaluate(weights, &self.problem.validation.samples)?;
        let row = self.rows.get_mut(iteration as usize).ok_or_else(|| {
            SimError::Protocol(format!("evaluation of unrecorded row {iteration}"))
        })?;
        row.val_loss = Some(loss);
        row.val_error = Some(error);
        Ok(())
    }

    pub fn finish(
        self,
        final_weights: ParamVector,
        diverged: bool,
        async_stats: Option<(f64, f64)>,
    ) -> RunRecord {
        let c = &self.spec.cluster;
        let diverged_at = diverged.then_some(self.rows.len() as u64);
        let summary = summarize(
            &self.rows,
            self.rows_per_epoch,
            diverged_at,
            self.warmup_stopped_at,
            async_stats,
        );
        RunRecord {
            meta: RunMeta {
                algorithm: c.algorithm,
                n_workers: c.n_workers,
                local_batch_size: c.local_batch_size,
                model_kind: self.problem.model.kind(),
                model_dimension: self.problem.model.dimension(),
                seed: c.seed,
                rows_per_epoch: self.rows_per_epoch,
            },
            rows: self.rows,
            summary,
            final_weights,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        }
    }
}

/// Per-worker contribution to one synchronous row.
pub(crate) struct WorkerStep {
    pub loss: f64,
    pub error: f64,
    pub lambda: f64,
    pub gradient: ParamVector,
    pub distance: ParamVector,
    pub reconstruction: ParamVector,
}

/// Folds the workers' contributions (in worker order) into a row.
pub(crate) fn sync_row(
    iteration: u64,
    simulated_time: f64,
    learning_rate: f64,
    steps: &[WorkerStep],
) -> Result<IterationRow, SimError> {
    let n = steps.len() as f64;
    let grads: Vec<&ParamVector> = steps.iter().map(|s| &s.gradient).collect();
    let mean_grad = crate::vecmath::sum_pairwise(&grads)?.scale(1.0 / n)?;
    Ok(IterationRow {
        iteration,
        simulated_time,
        train_loss: steps.iter().map(|s| s.loss).sum::<f64>() / n,
        train_error: steps.iter().map(|s| s.error).sum::<f64>() / n,
        mean_lambda: steps.iter().map(|s| s.lambda).sum::<f64>() / n,
        max_abs_d: steps
            .iter()
            .map(|s| s.distance.max_abs())
            .fold(0.0, f64::max),
        grad_norm: mean_grad.l2_norm()?,
        learning_rate,
        val_loss: None,
        val_error: None,
    })
}
