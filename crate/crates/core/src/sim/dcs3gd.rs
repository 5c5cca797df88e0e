//! DC-S3GD: every worker starts an allreduce of its last local update and,
//! while it is in flight, computes the next gradient at its own weights. When
//! the sum arrives the worker knows its distance `D_i` to the average,
//! corrects the gradient for it and jumps to the average plus its new update.

use super::driver::{sync_row, Driver, WorkerStep};
use super::events::{EventKey, EventQueue};
use super::observer::{Observer, RoundView};
use super::{reconstruct_average_weights, Problem, RunRecord, RunSpec, SimError, WorkerState};
use crate::models::BatchGradient;
use crate::optim::MomentumState;
use crate::vecmath::{sum_pairwise, ParamVector};

#[derive(Debug)]
enum Event {
    ComputeDone { worker: usize },
    ReduceDone { round: u64 },
}

impl EventKey for Event {
    fn slot(&self) -> usize {
        match self {
            Event::ComputeDone { worker } => *worker,
            Event::ReduceDone { .. } => usize::MAX,
        }
    }
    fn kind(&self) -> u8 {
        match self {
            Event::ComputeDone { .. } => 0,
            Event::ReduceDone { .. } => 1,
        }
    }
}

/// An allreduce of the local updates of one iteration.
#[derive(Debug)]
struct ReduceHandle {
    round: u64,
    contributions: Vec<Option<ParamVector>>,
    posted_at: Vec<f64>,
}

impl ReduceHandle {
    fn new(round: u64, n: usize) -> Self {
        Self {
            round,
            contributions: vec![None; n],
            posted_at: vec![0.0; n],
        }
    }

    fn complete(&self) -> bool {
        self.contributions.iter().all(Option::is_some)
    }

    /// The collective starts once the last contribution is posted.
    fn start_time(&self) -> f64 {
        self.posted_at
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn result(&self) -> Result<ParamVector, SimError> {
        let items: Vec<&ParamVector> = self.contributions.iter().flatten().collect();
        Ok(sum_pairwise(&items)?)
    }
}

struct State<'a, 'o> {
    driver: Driver<'a>,
    observer: &'o mut dyn Observer,
    queue: EventQueue<Event>,
    workers: Vec<WorkerState>,
    next_step: Vec<u64>,
    /// Gradient computed while waiting for the previous allreduce.
    waiting: Vec<Option<(BatchGradient, Vec<usize>)>>,
    collecting: ReduceHandle,
    in_flight: Option<(u64, ParamVector)>,
    /// Latest completed allreduce: `(round, Δ̄w)`.
    reduced: Option<(u64, ParamVector)>,
    steps: Vec<Option<WorkerStep>>,
    final_weights: Option<ParamVector>,
}

pub fn run_dc_s3gd(
    spec: &RunSpec,
    problem: &Problem,
    observer: &mut dyn Observer,
) -> Result<RunRecord, SimError> {
    let mut driver = Driver::new(spec, problem)?;
    let cursors = driver.cursors()?;
    let n = spec.cluster.n_workers;
    let init = &problem.initial_weights;
    let eta0 = driver.learning_rate(0)?;
    let workers = cursors
        .into_iter()
        .enumerate()
        .map(|(w, cursor)| {
            Ok(WorkerState {
                worker_id: w,
                weights: init.clone(),
                average: init.clone(),
                momentum: MomentumState::new(init, eta0, spec.optimizer.momentum)?,
                pending_update: None,
                shard_cursor: cursor,
                local_clock: 0.0,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let mut state = State {
        driver,
        observer,
        queue: EventQueue::new(),
        workers,
        next_step: vec![0; n],
        waiting: (0..n).map(|_| None).collect(),
        collecting: ReduceHandle::new(0, n),
        in_flight: None,
        reduced: None,
        steps: (0..n).map(|_| None).collect(),
        final_weights: None,
    };
    if spec.max_iterations > 0 {
        for w in 0..n {
            let t = spec.cluster.cost.compute_time(spec.cluster.seed, w, 0);
            state.queue.push(t, Event::ComputeDone { worker: w });
        }
    }

    let mut diverged = false;
    while let Some((time, event)) = state.queue.pop() {
        match state.handle(time, event) {
            Ok(()) => {}
            Err(e) if e.is_divergence() => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let final_weights = match state.final_weights {
        Some(w) if !diverged => w,
        _ => state.workers[0].weights.clone(),
    };
    Ok(state.driver.finish(final_weights, diverged, None))
}

impl State<'_, '_> {
    fn n(&self) -> usize {
        self.workers.len()
    }

    fn handle(&mut self, time: f64, event: Event) -> Result<(), SimError> {
        match event {
            Event::ComputeDone { worker } => {
                let step = self.next_step[worker];
                let cursor = &mut self.workers[worker].shard_cursor;
                let indices = cursor.next_batch()?.to_vec();
                let batch = self.driver.batch(&indices);
                let gradient = self
                    .driver
                    .problem
                    .model
                    .batch_gradient(&self.workers[worker].weights, &batch)?;
                let ready = step == 0 || matches!(&self.reduced, Some((r, _)) if *r + 1 == step);
                if ready {
                    self.local_step(worker, time, gradient, &indices)
                } else {
                    self.waiting[worker] = Some((gradient, indices));
                    Ok(())
                }
            }
            Event::ReduceDone { round } => {
                let (r, sum) = self
                    .in_flight
                    .take()
                    .ok_or_else(|| SimError::Protocol(format!("no allreduce {round} in flight")))?;
                debug_assert_eq!(r, round);
                self.reduced = Some((round, sum));
                // Every worker will recover the same average; evaluate it via
                // worker 0 using the same arithmetic the worker will use.
                if self.driver.wants_eval(round) {
                    let average = self.reconstruct(0)?;
                    self.driver.record_eval(round, &average)?;
                    if round + 1 == self.driver.spec.max_iterations {
                        self.final_weights = Some(average);
                    }
                }
                for w in 0..self.n() {
                    if let Some((gradient, indices)) = self.waiting[w].take() {
                        self.local_step(w, time, gradient, &indices)?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Average after the latest allreduce, as `worker` reconstructs it.
    fn reconstruct(&self, worker: usize) -> Result<ParamVector, SimError> {
        let (_, sum) = self
            .reduced
            .as_ref()
            .ok_or_else(|| SimError::Protocol("reconstruction before any allreduce".into()))?;
        if self.workers[worker].pending_update.is_none() {
            return Err(SimError::Protocol(format!(
                "worker {worker} has no update in flight"
            )));
        }
        reconstruct_average_weights(&self.workers[worker], sum, self.n())
    }

    /// The priming step (step 0) or one loop iteration for `worker`.
    fn local_step(
        &mut self,
        worker: usize,
        time: f64,
        gradient: BatchGradient,
        indices: &[usize],
    ) -> Result<(), SimError> {
        let step = self.next_step[worker];
        let (average, distance) = if step == 0 {
            (self.workers[worker].weights.clone(), None)
        } else {
            let average = self.reconstruct(worker)?;
            self.workers[worker].pending_update = None;
            let d = average.sub(&self.workers[worker].weights)?;
            (average, Some(d))
        };
        let batch = self.driver.batch(indices);
        let eta = self.driver.learning_rate(step)?;
        let w = &self.workers[worker];
        let (corrected, lambda) = self.driver.corrected_gradient(
            step,
            &w.weights,
            &gradient,
            distance.as_ref(),
            &batch,
        )?;

        let w = &mut self.workers[worker];
        w.momentum.set_eta(eta)?;
        let update = w.momentum.update(&corrected)?;
        w.weights = average.add(&update)?;
        w.average = average.clone();
        if w.pending_update.is_some() {
            return Err(SimError::Protocol(format!(
                "worker {worker} started a second allreduce"
            )));
        }
        w.pending_update = Some(update.clone());
        w.local_clock = time;
        self.next_step[worker] = step + 1;

        if self.collecting.round != step {
            return Err(SimError::Protocol(format!(
                "worker {worker} posted to round {step} while round {} is collecting",
                self.collecting.round
            )));
        }
        self.collecting.contributions[worker] = Some(update);
        self.collecting.posted_at[worker] = time;
        self.steps[worker] = Some(WorkerStep {
            loss: gradient.loss,
            error: gradient.error_rate,
            lambda,
            distance: distance.unwrap_or_else(|| average.zeros_like()),
            gradient: gradient.gradient,
            reconstruction: average,
        });

        let spec = self.driver.spec;
        if step + 1 < spec.max_iterations {
            let t = time
                + spec
                    .cluster
                    .cost
                    .compute_time(spec.cluster.seed, worker, step + 1);
            self.queue.push(t, Event::ComputeDone { worker });
        }
        if self.collecting.complete() {
            self.close_round(step, eta)?;
        }
        Ok(())
    }

    /// All updates of `round` are posted: launch the allreduce and record
    /// the row.
    fn close_round(&mut self, round: u64, eta: f64) -> Result<(), SimError> {
        if self.in_flight.is_some() {
            return Err(SimError::Protocol(format!(
                "allreduce {round} launched while the previous one is in flight"
            )));
        }
        let n = self.n();
        let handle = std::mem::replace(&mut self.collecting, ReduceHandle::new(round + 1, n));
        let start = handle.start_time();
        let sum = handle.result()?;
        let completion = start + self.driver.spec.cluster.cost.t_allreduce;
        self.queue.push(completion, Event::ReduceDone { round });

        let steps: Vec<WorkerStep> = self
            .steps
            .iter_mut()
            .map(|s| s.take())
            .collect::<Option<_>>()
            .ok_or_else(|| {
                SimError::Protocol(format!("round {round} closed with missing workers"))
            })?;
        let row = sync_row(round, start, eta, &steps)?;
        let distances: Vec<ParamVector> = steps.iter().map(|s| s.distance.clone()).collect();
        let reconstructions: Vec<ParamVector> =
            steps.into_iter().map(|s| s.reconstruction).collect();
        let weights: Vec<ParamVector> = self.workers.iter().map(|w| w.weights.clone()).collect();
        self.observer.on_round(&RoundView {
            iteration: round,
            reduced_update: self.reduced.as_ref().map(|(_, s)| s),
            distances: &distances,
            reconstructions: &reconstructions,
            weights: &weights,
        });
        self.in_flight = Some((round, sum));
        self.driver.push_row(row)
    }
}
