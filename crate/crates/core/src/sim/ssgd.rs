//! Synchronous SGD: gradients are averaged by a blocking allreduce and every
//! worker applies the same update to its replica.

use super::driver::{sync_row, Driver, WorkerStep};
use super::events::{EventKey, EventQueue};
use super::observer::{Observer, RoundView};
use super::{Problem, RunRecord, RunSpec, SimError, WorkerState};
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

pub fn run_ssgd(
    spec: &RunSpec,
    problem: &Problem,
    observer: &mut dyn Observer,
) -> Result<RunRecord, SimError> {
    let mut driver = Driver::new(spec, problem)?;
    let cursors = driver.cursors()?;
    let n = spec.cluster.n_workers;
    let cost = spec.cluster.cost;
    let seed = spec.cluster.seed;
    let init = &problem.initial_weights;
    let eta0 = driver.learning_rate(0)?;
    let mut workers = cursors
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

    let mut queue = EventQueue::new();
    let mut gradients: Vec<Option<BatchGradient>> = vec![None; n];
    let mut ready_at = vec![0.0; n];
    let mut step = 0u64;
    if spec.max_iterations > 0 {
        for w in 0..n {
            queue.push(
                cost.compute_time(seed, w, 0),
                Event::ComputeDone { worker: w },
            );
        }
    }

    let mut diverged = false;
    let mut outcome = Ok(());
    while let Some((time, event)) = queue.pop() {
        outcome = (|| -> Result<(), SimError> {
            match event {
                Event::ComputeDone { worker } => {
                    let w = &mut workers[worker];
                    let indices = w.shard_cursor.next_batch()?.to_vec();
                    let batch = driver.batch(&indices);
                    gradients[worker] = Some(problem.model.batch_gradient(&w.weights, &batch)?);
                    ready_at[worker] = time;
                    w.local_clock = time;
                    if gradients.iter().all(Option::is_some) {
                        let start = ready_at.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        queue.push(start + cost.t_allreduce, Event::ReduceDone { round: step });
                    }
                    Ok(())
                }
                Event::ReduceDone { round } => {
                    let done: Vec<BatchGradient> = gradients
                        .iter_mut()
                        .map(|g| g.take())
                        .collect::<Option<_>>()
                        .ok_or_else(|| {
                            SimError::Protocol(format!(
                                "allreduce {round} finished with missing gradients"
                            ))
                        })?;
                    let raw: Vec<&ParamVector> = done.iter().map(|g| &g.gradient).collect();
                    let mean = BatchGradient {
                        gradient: sum_pairwise(&raw)?.scale(1.0 / n as f64)?,
                        loss: 0.0,
                        error_rate: 0.0,
                    };
                    let eta = driver.learning_rate(round)?;
                    let (corrected, _) =
                        driver.corrected_gradient(round, &workers[0].weights, &mean, None, &[])?;
                    for w in workers.iter_mut() {
                        w.momentum.set_eta(eta)?;
                        let update = w.momentum.update(&corrected)?;
                        w.weights = w.weights.add(&update)?;
                        w.average = w.weights.clone();
                        w.local_clock = time;
                    }
                    let steps: Vec<WorkerStep> = done
                        .into_iter()
                        .map(|g| WorkerStep {
                            loss: g.loss,
                            error: g.error_rate,
                            lambda: 0.0,
                            distance: g.gradient.zeros_like(),
                            reconstruction: workers[0].weights.clone(),
                            gradient: g.gradient,
                        })
                        .collect();
                    let row = sync_row(round, time, eta, &steps)?;
                    let weights: Vec<ParamVector> =
                        workers.iter().map(|w| w.weights.clone()).collect();
                    let distances: Vec<ParamVector> =
                        steps.iter().map(|s| s.distance.clone()).collect();
                    observer.on_round(&RoundView {
                        iteration: round,
                        reduced_update: None,
                        distances: &distances,
                        reconstructions: &weights,
                        weights: &weights,
                    });
                    driver.push_row(row)?;
                    if driver.wants_eval(round) {
                        driver.record_eval(round, &workers[0].weights)?;
                    }
                    step = round + 1;
                    if step < spec.max_iterations {
                        for w in 0..n {
                            let t = time + cost.compute_time(seed, w, step);
                            queue.push(t, Event::ComputeDone { worker: w });
                        }
                    }
                    Ok(())
                }
            }
        })();
        if let Err(e) = &outcome {
            if e.is_divergence() {
                diverged = true;
                outcome = Ok(());
            }
            break;
        }
    }
    outcome?;
    Ok(driver.finish(workers[0].weights.clone(), diverged, None))
}
