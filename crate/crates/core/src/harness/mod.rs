//! Experiment harness: configuration files, persisted runs, comparisons and
//! parameter sweeps.

mod compare;
mod config;
mod experiment;
mod persist;
mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::models::ModelError;
use crate::optim::OptimError;
use crate::sim::SimError;

pub use compare::{compare_loaded, compare_runs, Comparison, ComparisonRow};
pub use config::{
    ClusterSection, CompensationSection, DatasetSection, ExperimentConfig, ModelSection,
    OptimizerSection, RunSection,
};
pub use experiment::{
    build_problem, build_spec, cluster_config, load_dataset, run_experiment, run_experiment_into,
    simulate, RunOutcome,
};
pub use persist::{
    load_run, resolve_output_dir, rows_to_csv, write_run, LoadedRun, RunFile, OUTPUT_ROOT_ENV,
    ROWS_FILE, RUN_FILE, VERSION,
};
pub use sweep::{sweep, SweepAxis, SweepPoint};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("cannot parse {}: {message}", path.as_deref().map_or("configuration".into(), |p| p.display().to_string()))]
    Parse {
        path: Option<PathBuf>,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("dataset {}: {source}", path.display())]
    Dataset { path: PathBuf, source: ModelError },
    #[error("{} does not contain a completed run", .0.display())]
    IncompleteRun(PathBuf),
    #[error("runs cannot be compared: {0}")]
    Mismatch(String),
    #[error("serialization: {0}")]
    Serialize(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
