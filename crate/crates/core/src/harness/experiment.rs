use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::persist::{resolve_output_dir, write_run};
use super::HarnessError;
use crate::models::{
    make_synthetic_dataset, read_binary, read_csv, Dataset, DatasetSpec, Model, ModelKind,
    QuadraticSpec,
};
use crate::optim::{theoretical_lr, CompensationConfig, PlateauConfig, Schedule};
use crate::sim::{
    self, Algorithm, ClusterConfig, CompensationMode, OptimizerSetup, Problem, RunRecord, RunSpec,
};
use crate::vecmath::BIAS_GROUP;

/// A finished run and where it was written.
#[derive(Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub output_dir: PathBuf,
}

/// Full dataset (before the train/validation split) described by `config`.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    let d = &config.dataset;
    if let Some(path) = &d.path {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let data = if is_csv {
            read_csv(path)
        } else {
            read_binary(path)
        };
        return data.map_err(|e| HarnessError::Dataset {
            path: path.clone(),
            source: e,
        });
    }
    let spec = DatasetSpec {
        kind: config.model.kind,
        n_samples: d.n_samples,
        dimension: d.dimension,
        n_classes: if config.model.kind == ModelKind::Quadratic {
            0
        } else {
            d.n_classes
        },
        seed: d.seed.unwrap_or(config.run.seed),
        separation: d.separation,
        noise: d.noise,
        margin: d.margin,
    };
    Ok(make_synthetic_dataset(&spec)?)
}

/// Model, split data and initial weights for `config`.
pub fn build_problem(config: &ExperimentConfig) -> Result<Problem, HarnessError> {
    let data = load_dataset(config)?;
    let m = &config.model;
    let model = match m.kind {
        ModelKind::Quadratic => Model::quadratic(QuadraticSpec::generate(
            data.dimension,
            m.rank,
            m.min_curvature,
            m.max_curvature,
            config.run.seed,
        )?),
        ModelKind::LogisticRegression => {
            Model::logistic_regression(data.dimension, data.n_classes)?
        }
        ModelKind::Mlp => Model::mlp(&[data.dimension, m.hidden.unwrap_or(0), data.n_classes])?,
    };
    let (train, validation) = data.split(config.dataset.validation_fraction)?;
    let initial_weights = model.initial_weights(config.run.seed);
    Ok(Problem {
        model,
        train,
        validation,
        initial_weights,
    })
}

pub fn cluster_config(config: &ExperimentConfig) -> ClusterConfig {
    let c = &config.cluster;
    ClusterConfig {
        n_workers: c.n_workers,
        algorithm: c.algorithm,
        local_batch_size: c.local_batch_size,
        cost: c.cost,
        seed: config.run.seed,
        sharding: c.sharding,
        wraparound: c.wraparound,
    }
}

/// Simulation settings for `config` on a training set of `n_train` samples.
///
/// The learning rate warms up linearly from `η_sn` to `N · η_sn` over
/// `warmup_fraction` of the run, then decays linearly to `end_lr`. Weight
/// decay follows the same shape with peak `weight_decay · weight_decay_factor`.
pub fn build_spec(config: &ExperimentConfig, n_train: usize) -> Result<RunSpec, HarnessError> {
    let cluster = cluster_config(config);
    let per_epoch = sim::rows_per_epoch(n_train, &cluster);
    if per_epoch == 0 {
        return Err(HarnessError::Config {
            field: "cluster.local_batch_size".into(),
            reason: format!(
                "{} training samples over {} workers cannot fill one batch of {}",
                n_train, cluster.n_workers, cluster.local_batch_size
            ),
        });
    }
    let total = match (config.run.epochs, config.run.max_iterations) {
        (Some(e), _) => e * per_epoch,
        (None, Some(k)) => k,
        (None, None) => unreachable!("validated"),
    };
    let o = &config.optimizer;
    let peak = if o.scale_lr && cluster.algorithm != Algorithm::DcAsgd {
        theoretical_lr(cluster.n_workers, o.eta_single_node)?
    } else {
        o.eta_single_node
    };
    let warmup_end = (o.warmup_fraction * total as f64).round() as u64;
    let learning_rate = Schedule::new(total, warmup_end, o.eta_single_node, peak, o.end_lr)?;
    let weight_decay = learning_rate.scaled_to_peak(o.weight_decay * o.weight_decay_factor)?;
    let decay_excluded_groups = if o.decay_biases {
        BTreeSet::new()
    } else {
        BTreeSet::from([BIAS_GROUP])
    };
    let plateau = o.plateau.then_some(PlateauConfig {
        window_epochs: o.plateau_window,
        threshold: o.plateau_threshold,
    });
    let comp = &config.compensation;
    let compensation = match (comp.enabled, comp.exact_hessian) {
        (false, _) => CompensationMode::Disabled,
        (true, true) => CompensationMode::ExactHessian,
        (true, false) => CompensationMode::PseudoHessian(CompensationConfig::new(comp.lambda0)?),
    };
    Ok(RunSpec {
        cluster,
        optimizer: OptimizerSetup {
            momentum: o.momentum,
            learning_rate,
            weight_decay,
            decay_excluded_groups,
            plateau,
        },
        compensation,
        max_iterations: total,
        eval_interval: config.run.eval_interval,
    })
}

/// Simulates `config` without writing anything.
pub fn simulate(config: &ExperimentConfig) -> Result<RunRecord, HarnessError> {
    config.validate()?;
    let problem = build_problem(config)?;
    let spec = build_spec(config, problem.train.len())?;
    Ok(sim::run(&spec, &problem)?)
}

/// Simulates `config` and persists the run under its output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let record = simulate(config)?;
    let output_dir = resolve_output_dir(&config.run.output_dir);
    write_run(&output_dir, config, &record)?;
    Ok(RunOutcome { record, output_dir })
}

/// Like [`run_experiment`] but into an explicit directory.
pub fn run_experiment_into(
    config: &ExperimentConfig,
    output_dir: &Path,
) -> Result<RunOutcome, HarnessError> {
    let record = simulate(config)?;
    write_run(output_dir, config, &record)?;
    Ok(RunOutcome {
        record,
        output_dir: output_dir.to_path_buf(),
    })
}
