//! Experiment configuration files (TOML).
//!
//! ```toml
//! [cluster]
//! n_workers = 8
//! algorithm = "dc-s3gd"          # or "ssgd", "dc-asgd"
//! local_batch_size = 32
//!
//! [cluster.cost]
//! t_compute = 1.0
//! t_allreduce = 0.6
//! t_ps_roundtrip = 0.6
//!
//! [model]
//! kind = "logistic_regression"  # or "mlp" (set `hidden`), "quadratic"
//!
//! [dataset]
//! n_samples = 8192
//! dimension = 32
//! n_classes = 4
//!
//! [optimizer]
//! eta_single_node = 0.05
//!
//! [run]
//! seed = 1
//! epochs = 30
//! output_dir = "runs/dc-s3gd"
//! ```
//!
//! Every other field has a default; unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::models::ModelKind;
use crate::sim::{Algorithm, CostModel, Sharding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cluster: ClusterSection,
    pub model: ModelSection,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub compensation: CompensationSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub n_workers: usize,
    pub algorithm: Algorithm,
    pub local_batch_size: usize,
    #[serde(default = "default_sharding")]
    pub sharding: Sharding,
    #[serde(default = "yes")]
    pub wraparound: bool,
    pub cost: CostModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Hidden width of the MLP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    /// Low-rank terms of a generated quadratic.
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_min_curvature")]
    pub min_curvature: f64,
    #[serde(default = "default_max_curvature")]
    pub max_curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Dataset file (`.csv`, anything else is read as binary). Relative paths
    /// are resolved against the configuration file. Without a path the data
    /// is generated from the fields below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub n_samples: usize,
    #[serde(default)]
    pub dimension: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    /// Generation seed; the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub eta_single_node: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Multiply the peak learning rate by the worker count (synchronous
    /// algorithms only; a DC-ASGD update uses one worker's batch).
    #[serde(default = "yes")]
    pub scale_lr: bool,
    /// Share of the run spent warming up.
    #[serde(default = "default_warmup_fraction")]
    pub warmup_fraction: f64,
    #[serde(default)]
    pub end_lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Peak weight decay is `weight_decay · weight_decay_factor`.
    #[serde(default = "default_weight_decay_factor")]
    pub weight_decay_factor: f64,
    #[serde(default)]
    pub decay_biases: bool,
    #[serde(default = "yes")]
    pub plateau: bool,
    #[serde(default = "default_plateau_window")]
    pub plateau_window: usize,
    #[serde(default = "default_plateau_threshold")]
    pub plateau_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensationSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    /// Use the model's exact Hessian-vector product with unit scale.
    #[serde(default)]
    pub exact_hessian: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    /// Exactly one of `epochs` and `max_iterations` must be set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u64>,
    /// Validation every this many iterations; 0 evaluates only at the end.
    #[serde(default)]
    pub eval_interval: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn yes() -> bool {
    true
}
fn default_sharding() -> Sharding {
    Sharding::Disjoint
}
fn default_rank() -> usize {
    2
}
fn default_min_curvature() -> f64 {
    0.5
}
fn default_max_curvature() -> f64 {
    2.0
}
fn default_classes() -> usize {
    2
}
fn default_separation() -> f64 {
    4.0
}
fn default_noise() -> f64 {
    1.5
}
fn default_margin() -> f64 {
    0.25
}
fn default_validation_fraction() -> f64 {
    0.2
}
fn default_momentum() -> f64 {
    0.9
}
fn default_warmup_fraction() -> f64 {
    0.5
}
fn default_weight_decay() -> f64 {
    0.0001
}
fn default_weight_decay_factor() -> f64 {
    2.3
}
fn default_plateau_window() -> usize {
    5
}
fn default_plateau_threshold() -> f64 {
    0.005
}
fn default_lambda0() -> f64 {
    crate::optim::DEFAULT_LAMBDA0
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            eta_single_node: 0.1,
            momentum: default_momentum(),
            scale_lr: true,
            warmup_fraction: default_warmup_fraction(),
            end_lr: 0.0,
            weight_decay: default_weight_decay(),
            weight_decay_factor: default_weight_decay_factor(),
            decay_biases: false,
            plateau: true,
            plateau_window: default_plateau_window(),
            plateau_threshold: default_plateau_threshold(),
        }
    }
}

impl Default for CompensationSection {
    fn default() -> Self {
        Self {
            enabled: true,
            lambda0: default_lambda0(),
            exact_hessian: false,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), HarnessError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be finite and >= 0")))
    }
}

fn positive(field: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be finite and > 0")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: None,
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: Some(path.to_path_buf()),
            message: e.to_string(),
        })?;
        if let Some(data) = &config.dataset.path {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.dataset.path = Some(base.join(data));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Serialize(e.to_string()))
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let c = &self.cluster;
        if c.n_workers == 0 {
            return Err(invalid("cluster.n_workers", "must be at least 1"));
        }
        if c.local_batch_size == 0 {
            return Err(invalid("cluster.local_batch_size", "must be at least 1"));
        }
        non_negative("cluster.cost.t_compute", c.cost.t_compute)?;
        non_negative("cluster.cost.t_allreduce", c.cost.t_allreduce)?;
        non_negative("cluster.cost.t_ps_roundtrip", c.cost.t_ps_roundtrip)?;
        non_negative("cluster.cost.jitter", c.cost.jitter)?;

        let m = &self.model;
        match m.kind {
            ModelKind::Mlp => match m.hidden {
                Some(h) if h > 0 => {}
                _ => {
                    return Err(invalid(
                        "model.hidden",
                        "an mlp needs a positive hidden width",
                    ))
                }
            },
            _ if m.hidden.is_some() => {
                return Err(invalid(
                    "model.hidden",
                    format!("not used by {} models", m.kind),
                ));
            }
            ModelKind::Quadratic => {
                non_negative("model.min_curvature", m.min_curvature)?;
                if !(m.max_curvature >= m.min_curvature && m.max_curvature.is_finite()) {
                    return Err(invalid(
                        "model.max_curvature",
                        "must be finite and >= min_curvature",
                    ));
                }
            }
            ModelKind::LogisticRegression => {}
        }

        let d = &self.dataset;
        if d.path.is_none() {
            if d.n_samples == 0 {
                return Err(invalid(
                    "dataset.n_samples",
                    "must be positive (or give dataset.path)",
                ));
            }
            if d.dimension == 0 {
                return Err(invalid(
                    "dataset.dimension",
                    "must be positive (or give dataset.path)",
                ));
            }
            if m.kind != ModelKind::Quadratic && d.n_classes < 2 {
                return Err(invalid(
                    "dataset.n_classes",
                    "a classifier needs at least 2 classes",
                ));
            }
            positive("dataset.separation", d.separation)?;
            non_negative("dataset.noise", d.noise)?;
            non_negative("dataset.margin", d.margin)?;
        }
        if !(0.0..1.0).contains(&d.validation_fraction) {
            return Err(invalid("dataset.validation_fraction", "must be in [0, 1)"));
        }

        let o = &self.optimizer;
        positive("optimizer.eta_single_node", o.eta_single_node)?;
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(invalid("optimizer.momentum", "must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&o.warmup_fraction) {
            return Err(invalid("optimizer.warmup_fraction", "must be in [0, 1]"));
        }
        non_negative("optimizer.end_lr", o.end_lr)?;
        non_negative("optimizer.weight_decay", o.weight_decay)?;
        non_negative("optimizer.weight_decay_factor", o.weight_decay_factor)?;
        if o.plateau {
            if o.plateau_window == 0 {
                return Err(invalid("optimizer.plateau_window", "must be at least 1"));
            }
            non_negative("optimizer.plateau_threshold", o.plateau_threshold)?;
        }

        non_negative("compensation.lambda0", self.compensation.lambda0)?;
        if self.compensation.exact_hessian && self.model.kind == ModelKind::Mlp {
            return Err(invalid(
                "compensation.exact_hessian",
                "no exact Hessian-vector product for the MLP",
            ));
        }

        let r = &self.run;
        match (r.epochs, r.max_iterations) {
            (Some(0), _) => return Err(invalid("run.epochs", "must be positive")),
            (_, Some(0)) => return Err(invalid("run.max_iterations", "must be positive")),
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "run.epochs",
                    "set either epochs or max_iterations, not both",
                ))
            }
            (None, None) => return Err(invalid("run.epochs", "set epochs or max_iterations")),
            _ => {}
        }
        if r.output_dir.as_os_str().is_empty() {
            return Err(invalid("run.output_dir", "must not be empty"));
        }
        Ok(())
    }

    /// Label used in comparisons: the configured one, else the algorithm and
    /// worker count.
    pub fn label(&self) -> String {
        self.run
            .label
            .clone()
            .unwrap_or_else(|| format!("{}-n{}", self.cluster.algorithm, self.cluster.n_workers))
    }
}
