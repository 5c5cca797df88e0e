//! Discrete-event simulation of a data-parallel cluster.
//!
//! Workers, collectives and the parameter server are simulated in one thread
//! from a single event queue, so a run is a pure function of its inputs and
//! master seed. Compute and communication costs come from [`CostModel`];
//! nothing is timed on the host.

mod dcasgd;
mod dcs3gd;
mod driver;
mod events;
mod observer;
mod record;
mod shard;
mod ssgd;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Dataset, Model, ModelError};
use crate::optim::{CompensationConfig, MomentumState, OptimError, PlateauConfig, Schedule};
use crate::seed;
use crate::vecmath::{GroupId, ParamVector, VecError};

pub use dcasgd::run_dc_asgd;
pub use dcs3gd::run_dc_s3gd;
pub use events::{EventKey, EventQueue};
pub use observer::{AsyncUpdateView, NoopObserver, Observer, RoundView};
pub use record::{IterationRow, RunMeta, RunRecord, RunSummary};
pub use shard::{shard_ranges, ShardCursor, Sharding};
pub use ssgd::run_ssgd;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid cluster configuration: {0}")]
    Config(String),
    #[error("shard {shard} exhausted after epoch {epoch} and wraparound is disabled")]
    ShardExhausted { shard: String, epoch: u64 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Vec(#[from] VecError),
}

impl SimError {
    /// Non-finite values anywhere in the numerics mean the run diverged.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            SimError::Vec(VecError::NonFinite { .. })
                | SimError::Model(ModelError::NonFiniteLoss(_))
                | SimError::Model(ModelError::Vec(VecError::NonFinite { .. }))
                | SimError::Optim(OptimError::Vec(VecError::NonFinite { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DcS3gd,
    Ssgd,
    DcAsgd,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::DcS3gd => "dc-s3gd",
            Algorithm::Ssgd => "ssgd",
            Algorithm::DcAsgd => "dc-asgd",
        })
    }
}

/// Simulated durations, in arbitrary but consistent time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Forward and backward pass of one local batch.
    pub t_compute: f64,
    /// One allreduce of a full parameter-sized vector.
    pub t_allreduce: f64,
    /// Worker → parameter server → worker round trip.
    pub t_ps_roundtrip: f64,
    /// Per-worker, per-iteration slowdown: the compute time is multiplied by
    /// `1 + jitter · u` with `u` uniform in `[0, 1)`.
    #[serde(default)]
    pub jitter: f64,
}

impl CostModel {
    pub fn new(t_compute: f64, t_allreduce: f64, t_ps_roundtrip: f64) -> Self {
        Self {
            t_compute,
            t_allreduce,
            t_ps_roundtrip,
            jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("t_compute", self.t_compute),
            ("t_allreduce", self.t_allreduce),
            ("t_ps_roundtrip", self.t_ps_roundtrip),
            ("jitter", self.jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Compute time of `worker`'s `iteration`-th local step.
    pub fn compute_time(&self, master_seed: u64, worker: usize, iteration: u64) -> f64 {
        if self.jitter == 0.0 {
            return self.t_compute;
        }
        let u = seed::unit_draw(master_seed, &format!("jitter/{worker}/{iteration}"));
        self.t_compute * (1.0 + self.jitter * u)
    }
}

/// Steady-state wall time of one iteration without jitter.
///
/// SSGD waits for its gradient allreduce, DC-S3GD hides the allreduce behind
/// the next gradient computation, and a DC-ASGD worker pays a parameter-server
/// round trip after every gradient.
pub fn simulated_iteration_time(cost: &CostModel, algorithm: Algorithm) -> f64 {
    match algorithm {
        Algorithm::Ssgd => cost.t_compute + cost.t_allreduce,
        Algorithm::DcS3gd => cost.t_compute.max(cost.t_allreduce),
        Algorithm::DcAsgd => cost.t_compute + cost.t_ps_roundtrip,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub n_workers: usize,
    pub algorithm: Algorithm,
    pub local_batch_size: usize,
    pub cost: CostModel,
    pub seed: u64,
    pub sharding: Sharding,
    /// Start a new epoch when a shard runs out; otherwise that is an error.
    pub wraparound: bool,
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_workers == 0 {
            return Err(SimError::Config("n_workers must be at least 1".into()));
        }
        if self.local_batch_size == 0 {
            return Err(SimError::Config(
                "local_batch_size must be at least 1".into(),
            ));
        }
        self.cost.validate()
    }
}

/// How the gradient is corrected for the distance to the shared weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompensationMode {
    Disabled,
    /// Pseudo-Hessian `g ⊙ g ⊙ D` with the dynamic scale.
    PseudoHessian(CompensationConfig),
    /// Exact Hessian-vector product `H(w) · D` with unit scale.
    ExactHessian,
}

/// Optimizer settings shared by all workers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSetup {
    pub momentum: f64,
    /// Learning rate by global iteration.
    pub learning_rate: Schedule,
    /// Weight-decay coefficient by global iteration.
    pub weight_decay: Schedule,
    pub decay_excluded_groups: BTreeSet<GroupId>,
    /// Cut the warm-up short when the training loss stalls.
    pub plateau: Option<PlateauConfig>,
}

impl OptimizerSetup {
    /// Constant learning rate, no weight decay, no plateau rule.
    pub fn constant(
        total_iterations: u64,
        learning_rate: f64,
        momentum: f64,
    ) -> Result<Self, OptimError> {
        Ok(Self {
            momentum,
            learning_rate: Schedule::constant(total_iterations, learning_rate)?,
            weight_decay: Schedule::constant(total_iterations, 0.0)?,
            decay_excluded_groups: BTreeSet::new(),
            plateau: None,
        })
    }
}

/// Rows that make up one pass over `n_train` samples: global iterations for
/// the synchronous algorithms, server updates for DC-ASGD. Zero when a shard
/// cannot supply a single batch.
pub fn rows_per_epoch(n_train: usize, cluster: &ClusterConfig) -> u64 {
    let n = cluster.n_workers.max(1);
    let shard = match cluster.sharding {
        Sharding::Disjoint => n_train / n,
        Sharding::Replicated => n_train,
    };
    let per_worker = (shard / cluster.local_batch_size.max(1)) as u64;
    match cluster.algorithm {
        Algorithm::DcAsgd => per_worker * n as u64,
        _ => per_worker,
    }
}

/// Model, data and starting point of a run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Model,
    pub train: Dataset,
    pub validation: Dataset,
    pub initial_weights: ParamVector,
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub cluster: ClusterConfig,
    pub optimizer: OptimizerSetup,
    pub compensation: CompensationMode,
    /// Gradient steps to take. For the synchronous algorithms this is the
    /// number of global iterations; for DC-ASGD it is the number of
    /// parameter-server updates.
    pub max_iterations: u64,
    /// Evaluate on the validation set every this many iterations (0: only
    /// after the last one).
    pub eval_interval: u64,
}

/// Per-worker state of the synchronous algorithms.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub worker_id: usize,
    /// Local weights `w_i`, where the worker computes its gradient.
    pub weights: ParamVector,
    /// Last average `w̄` the worker reconstructed; `weights = average + Δw_i`.
    pub average: ParamVector,
    pub momentum: MomentumState,
    /// Local update still inside an unfinished allreduce.
    pub pending_update: Option<ParamVector>,
    pub shard_cursor: ShardCursor,
    pub local_clock: f64,
}

/// The new average `w̄ + Δ̄w / N` from the worker's previous average and the
/// reduced sum of all local updates.
///
/// Only quantities shared by every worker enter, so all workers obtain
/// bit-identical results. The distance is then `D_i = w̄_new − w_i`, which
/// equals `Δ̄w / N − Δw_i` up to rounding.
pub fn reconstruct_average_weights(
    worker: &WorkerState,
    reduced_sum: &ParamVector,
    n_workers: usize,
) -> Result<ParamVector, SimError> {
    Ok(reduced_sum.axpy(1.0 / n_workers as f64, &worker.average)?)
}

/// Runs the algorithm named in the cluster configuration.
pub fn run(spec: &RunSpec, problem: &Problem) -> Result<RunRecord, SimError> {
    run_observed(spec, problem, &mut NoopObserver)
}

pub fn run_observed(
    spec: &RunSpec,
    problem: &Problem,
    observer: &mut dyn Observer,
) -> Result<RunRecord, SimError> {
    match spec.cluster.algorithm {
        Algorithm::DcS3gd => run_dc_s3gd(spec, problem, observer),
        Algorithm::Ssgd => run_ssgd(spec, problem, observer),
        Algorithm::DcAsgd => run_dc_asgd(spec, problem, observer),
    }
}
