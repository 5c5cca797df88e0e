use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::run_experiment_into;
use super::HarnessError;
use crate::seed::derive_seed;
use crate::sim::RunSummary;

/// The configuration value a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NWorkers,
    /// Worker count with the global batch `n_workers · local_batch_size` of
    /// the base configuration held fixed.
    NWorkersFixedBatch,
    Lambda0,
    LocalBatchSize,
    EtaSingleNode,
    Momentum,
    TCompute,
    TAllreduce,
    Jitter,
}

const AXES: [(SweepAxis, &str); 9] = [
    (SweepAxis::NWorkers, "n_workers"),
    (SweepAxis::NWorkersFixedBatch, "n_workers_fixed_batch"),
    (SweepAxis::Lambda0, "lambda0"),
    (SweepAxis::LocalBatchSize, "local_batch_size"),
    (SweepAxis::EtaSingleNode, "eta_single_node"),
    (SweepAxis::Momentum, "momentum"),
    (SweepAxis::TCompute, "t_compute"),
    (SweepAxis::TAllreduce, "t_allreduce"),
    (SweepAxis::Jitter, "jitter"),
];

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = AXES
            .iter()
            .find(|(a, _)| a == self)
            .map(|(_, n)| *n)
            .unwrap_or("?");
        f.write_str(name)
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AXES.iter()
            .find(|(_, n)| *n == s)
            .map(|(a, _)| *a)
            .ok_or_else(|| HarnessError::Config {
                field: "axis".into(),
                reason: format!(
                    "unknown sweep axis {s:?}; expected one of {}",
                    AXES.iter().map(|(_, n)| *n).collect::<Vec<_>>().join(", ")
                ),
            })
    }
}

fn count(axis: SweepAxis, value: f64) -> Result<usize, HarnessError> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(HarnessError::Config {
            field: axis.to_string(),
            reason: format!("{value} is not a positive integer"),
        })
    }
}

impl SweepAxis {
    /// `base` with this axis set to `value`, validated.
    pub fn apply(
        self,
        base: &ExperimentConfig,
        value: f64,
    ) -> Result<ExperimentConfig, HarnessError> {
        let mut c = base.clone();
        match self {
            SweepAxis::NWorkers => c.cluster.n_workers = count(self, value)?,
            SweepAxis::NWorkersFixedBatch => {
                let n = count(self, value)?;
                let global = base.cluster.n_workers * base.cluster.local_batch_size;
                if !global.is_multiple_of(n) {
                    return Err(HarnessError::Config {
                        field: self.to_string(),
                        reason: format!("global batch {global} is not divisible by {n} workers"),
                    });
                }
                c.cluster.n_workers = n;
                c.cluster.local_batch_size = global / n;
            }
            SweepAxis::Lambda0 => c.compensation.lambda0 = value,
            SweepAxis::LocalBatchSize => c.cluster.local_batch_size = count(self, value)?,
            SweepAxis::EtaSingleNode => c.optimizer.eta_single_node = value,
            SweepAxis::Momentum => c.optimizer.momentum = value,
            SweepAxis::TCompute => c.cluster.cost.t_compute = value,
            SweepAxis::TAllreduce => c.cluster.cost.t_allreduce = value,
            SweepAxis::Jitter => c.cluster.cost.jitter = value,
        }
        c.validate()?;
        Ok(c)
    }
}

/// Outcome of one sweep point; failures are kept rather than aborting the
/// sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub label: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(skip)]
    pub result: Result<RunSummary, String>,
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    axis: String,
    value: f64,
    label: &'a str,
    seed: u64,
    status: &'static str,
    completed_iterations: Option<u64>,
    final_train_loss: Option<f64>,
    final_val_error: Option<f64>,
    total_simulated_time: Option<f64>,
    time_per_iteration: Option<f64>,
    error: Option<&'a str>,
}

/// Runs `base` once per value of `axis`, in parallel, each into
/// `root/<axis>=<value>`, and writes `root/sweep.csv`.
///
/// Point `i` trains with seed `derive_seed(base seed, "sweep/{i}")`. The
/// dataset seed is pinned to the base configuration's so every point sees
/// the same data.
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    root: &Path,
) -> Result<Vec<SweepPoint>, HarnessError> {
    base.validate()?;
    std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
    let points: Vec<SweepPoint> = values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let label = format!("{axis}={value}");
            let output_dir = root.join(&label);
            let seed = derive_seed(base.run.seed, &format!("sweep/{i}"));
            let result = axis
                .apply(base, value)
                .and_then(|mut config| {
                    config.dataset.seed = Some(base.dataset.seed.unwrap_or(base.run.seed));
                    config.run.seed = seed;
                    config.run.label = Some(label.clone());
                    config.run.output_dir = output_dir.clone();
                    run_experiment_into(&config, &output_dir)
                })
                .map(|outcome| outcome.record.summary)
                .map_err(|e| e.to_string());
            SweepPoint {
                value,
                label,
                output_dir,
                seed,
                result,
            }
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &points {
        let ok = p.result.as_ref().ok();
        w.serialize(SweepCsvRow {
            axis: axis.to_string(),
            value: p.value,
            label: &p.label,
            seed: p.seed,
            status: match &p.result {
                Ok(s) if s.diverged_at.is_some() => "diverged",
                Ok(_) => "ok",
                Err(_) => "failed",
            },
            completed_iterations: ok.map(|s| s.completed_iterations),
            final_train_loss: ok.map(|s| s.final_train_loss),
            final_val_error: ok.and_then(|s| s.final_val_error),
            total_simulated_time: ok.map(|s| s.total_simulated_time),
            time_per_iteration: ok.map(|s| s.time_per_iteration),
            error: p.result.as_ref().err().map(String::as_str),
        })?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Serialize(e.to_string()))?;
    let path = root.join("sweep.csv");
    std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
    Ok(points)
}
