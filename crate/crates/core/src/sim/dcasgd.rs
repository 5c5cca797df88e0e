//! DC-ASGD: a single parameter server applies each worker's gradient as soon
//! as it arrives, correcting it for how far the server has moved since the
//! worker fetched its weights.

use super::driver::Driver;
use super::events::{EventKey, EventQueue};
use super::observer::{AsyncUpdateView, Observer};
use super::record::IterationRow;
use super::{Problem, RunRecord, RunSpec, ShardCursor, SimError};
use crate::models::BatchGradient;
use crate::optim::MomentumState;
use crate::vecmath::ParamVector;

#[derive(Debug)]
enum Event {
    ComputeDone { worker: usize },
    Arrival { worker: usize },
    Resume { worker: usize },
}

impl EventKey for Event {
    fn slot(&self) -> usize {
        match self {
            Event::ComputeDone { worker }
            | Event::Arrival { worker }
            | Event::Resume { worker } => *worker,
        }
    }
    fn kind(&self) -> u8 {
        match self {
            Event::ComputeDone { .. } => 0,
            Event::Arrival { .. } => 1,
            Event::Resume { .. } => 2,
        }
    }
}

struct AsyncWorker {
    weights: ParamVector,
    /// Server version the weights were fetched at.
    version: u64,
    local_iteration: u64,
    cursor: ShardCursor,
    /// Gradient on its way to the server.
    outgoing: Option<(BatchGradient, Vec<usize>)>,
    /// Fresh server weights on their way back.
    incoming: Option<(ParamVector, u64)>,
}

pub fn run_dc_asgd(
    spec: &RunSpec,
    problem: &Problem,
    observer: &mut dyn Observer,
) -> Result<RunRecord, SimError> {
    let mut driver = Driver::new(spec, problem)?;
    let cursors = driver.cursors()?;
    let cost = spec.cluster.cost;
    let seed = spec.cluster.seed;
    let half_trip = cost.t_ps_roundtrip / 2.0;
    let init = &problem.initial_weights;

    let mut server = init.clone();
    let mut momentum = MomentumState::new(init, driver.learning_rate(0)?, spec.optimizer.momentum)?;
    let mut version = 0u64;
    let mut workers: Vec<AsyncWorker> = cursors
        .into_iter()
        .map(|cursor| AsyncWorker {
            weights: init.clone(),
            version: 0,
            local_iteration: 0,
            cursor,
            outgoing: None,
            incoming: None,
        })
        .collect();
    let mut queue = EventQueue::new();
    if spec.max_iterations > 0 {
        for w in 0..workers.len() {
            queue.push(
                cost.compute_time(seed, w, 0),
                Event::ComputeDone { worker: w },
            );
        }
    }

    let mut staleness_sum = 0.0;
    let mut distance_sum = 0.0;
    let mut diverged = false;
    while let Some((time, event)) = queue.pop() {
        let outcome = (|| -> Result<(), SimError> {
            match event {
                Event::ComputeDone { worker } => {
                    let w = &mut workers[worker];
                    let indices = w.cursor.next_batch()?.to_vec();
                    let batch = driver.batch(&indices);
                    let gradient = problem.model.batch_gradient(&w.weights, &batch)?;
                    w.outgoing = Some((gradient, indices));
                    queue.push(time + half_trip, Event::Arrival { worker });
                }
                Event::Arrival { worker } => {
                    if version >= spec.max_iterations {
                        return Ok(());
                    }
                    let w = &mut workers[worker];
                    let (gradient, indices) = w.outgoing.take().ok_or_else(|| {
                        SimError::Protocol(format!(
                            "arrival from worker {worker} without a gradient"
                        ))
                    })?;
                    let batch = driver.batch(&indices);
                    let distance = server.sub(&w.weights)?;
                    let staleness = version - w.version;
                    let (corrected, lambda) = driver.corrected_gradient(
                        version,
                        &w.weights,
                        &gradient,
                        Some(&distance),
                        &batch,
                    )?;
                    let eta = driver.learning_rate(version)?;
                    momentum.set_eta(eta)?;
                    server = server.add(&momentum.update(&corrected)?)?;
                    let row = IterationRow {
                        iteration: version,
                        simulated_time: time,
                        train_loss: gradient.loss,
                        train_error: gradient.error_rate,
                        mean_lambda: lambda,
                        max_abs_d: distance.max_abs(),
                        grad_norm: gradient.gradient.l2_norm()?,
                        learning_rate: eta,
                        val_loss: None,
                        val_error: None,
                    };
                    let distance_norm = distance.l2_norm()?;
                    staleness_sum += staleness as f64;
                    distance_sum += distance_norm;
                    observer.on_async_update(&AsyncUpdateView {
                        update_index: version,
                        worker,
                        staleness,
                        distance: &distance,
                        server_weights: &server,
                    });
                    driver.push_row(row)?;
                    if driver.wants_eval(version) {
                        driver.record_eval(version, &server)?;
                    }
                    version += 1;
                    if version < spec.max_iterations {
                        w.incoming = Some((server.clone(), version));
                        queue.push(time + half_trip, Event::Resume { worker });
                    }
                }
                Event::Resume { worker } => {
                    let w = &mut workers[worker];
                    let (weights, fetched) = w.incoming.take().ok_or_else(|| {
                        SimError::Protocol(format!("worker {worker} resumed without weights"))
                    })?;
                    w.weights = weights;
                    w.version = fetched;
                    w.local_iteration += 1;
                    let t = time + cost.compute_time(seed, worker, w.local_iteration);
                    queue.push(t, Event::ComputeDone { worker });
                }
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => {}
            Err(e) if e.is_divergence() => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let updates = version.max(1) as f64;
    let stats = Some((staleness_sum / updates, distance_sum / updates));
    Ok(driver.finish(server, diverged, stats))
}
