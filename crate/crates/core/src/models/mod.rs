//! Differentiable objectives and their gradient oracles.
//!
//! A [`Model`] is a pure description of a per-sample loss `l(w, x)`; batch
//! losses and gradients are the plain means over the batch. Three kinds are
//! available:
//!
//! - [`ModelKind::Quadratic`]: convex quadratic with exact, weight-independent
//!   Hessian, so first-order Taylor corrections are exact.
//! - [`ModelKind::LogisticRegression`]: multinomial softmax regression with an
//!   analytic Hessian-vector product.
//! - [`ModelKind::Mlp`]: one hidden tanh layer, non-convex.

mod dataset;
mod io;
mod quadratic;
mod softmax;

use std::borrow::Borrow;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::vecmath::{GroupId, ParamVector, VecError, WEIGHT_GROUP};

pub use dataset::{make_synthetic_dataset, Dataset, DatasetSpec};
pub use io::{read_binary, read_csv, write_binary, write_csv, DATASET_MAGIC, DATASET_VERSION};
pub use quadratic::QuadraticSpec;

use softmax::{Linear, Mlp, SampleEval};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("label {label} outside {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{kind} model needs a {expected} label")]
    LabelKind {
        kind: ModelKind,
        expected: &'static str,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid count: {0} must be positive")]
    InvalidCount(&'static str),
    #[error("finite-difference step {step} vanishes at coordinate {index} (weight {weight})")]
    StepUnderflow {
        index: usize,
        step: f64,
        weight: f64,
    },
    #[error("exact Hessian is not available for {0} models")]
    Unsupported(ModelKind),
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error(transparent)]
    Vec(#[from] VecError),
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quadratic,
    LogisticRegression,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Quadratic => "quadratic",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Class(usize),
    Target(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn class(features: Vec<f64>, class: usize) -> Self {
        Self {
            features,
            label: Label::Class(class),
        }
    }
}

/// Mean gradient, mean loss and top-1 error rate over one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub gradient: ParamVector,
    pub loss: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Architecture {
    Quadratic(QuadraticSpec),
    Logistic(Linear),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    groups: Vec<GroupId>,
}

impl Model {
    pub fn quadratic(spec: QuadraticSpec) -> Self {
        let groups = vec![WEIGHT_GROUP; spec.dimension()];
        Self {
            arch: Architecture::Quadratic(spec),
            groups,
        }
    }

    pub fn logistic_regression(inputs: usize, classes: usize) -> Result<Self, ModelError> {
        if inputs == 0 {
            return Err(ModelError::InvalidCount("inputs"));
        }
        if classes < 2 {
            return Err(ModelError::InvalidModel(
                "a classifier needs at least 2 classes".into(),
            ));
        }
        let lin = Linear { inputs, classes };
        Ok(Self {
            groups: lin.groups(),
            arch: Architecture::Logistic(lin),
        })
    }

    /// One-hidden-layer MLP from layer sizes `[inputs, hidden, classes]`.
    pub fn mlp(layers: &[usize]) -> Result<Self, ModelError> {
        let &[inputs, hidden, classes] = layers else {
            return Err(ModelError::InvalidModel(format!(
                "mlp needs exactly 3 layer sizes, got {}",
                layers.len()
            )));
        };
        if inputs == 0 || hidden == 0 {
            return Err(ModelError::InvalidCount("layer size"));
        }
        if classes < 2 {
            return Err(ModelError::InvalidModel(
                "a classifier needs at least 2 classes".into(),
            ));
        }
        let mlp = Mlp {
            inputs,
            hidden,
            classes,
        };
        Ok(Self {
            groups: mlp.groups(),
            arch: Architecture::Mlp(mlp),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.arch {
            Architecture::Quadratic(_) => ModelKind::Quadratic,
            Architecture::Logistic(_) => ModelKind::LogisticRegression,
            Architecture::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Number of parameters.
    pub fn dimension(&self) -> usize {
        self.groups.len()
    }

    /// Expected feature length of each sample.
    pub fn input_dimension(&self) -> usize {
        match &self.arch {
            Architecture::Quadratic(q) => q.dimension(),
            Architecture::Logistic(l) => l.inputs,
            Architecture::Mlp(m) => m.inputs,
        }
    }

    /// Class count, or `None` for the quadratic kind.
    pub fn classes(&self) -> Option<usize> {
        match &self.arch {
            Architecture::Quadratic(_) => None,
            Architecture::Logistic(l) => Some(l.classes),
            Architecture::Mlp(m) => Some(m.classes),
        }
    }

    /// Layer sizes for the MLP, `[inputs, classes]` for logistic regression.
    pub fn layer_sizes(&self) -> Vec<usize> {
        match &self.arch {
            Architecture::Quadratic(q) => vec![q.dimension()],
            Architecture::Logistic(l) => vec![l.inputs, l.classes],
            Architecture::Mlp(m) => vec![m.inputs, m.hidden, m.classes],
        }
    }

    pub fn quadratic_spec(&self) -> Option<&QuadraticSpec> {
        match &self.arch {
            Architecture::Quadratic(q) => Some(q),
            _ => None,
        }
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    /// Vector in this model's group layout.
    pub fn param_vector(&self, values: Vec<f64>) -> Result<ParamVector, ModelError> {
        self.check_len("values", values.len())?;
        Ok(ParamVector::with_groups(values, self.groups.clone())?)
    }

    /// Deterministic starting point: Glorot-uniform weight matrices and zero
    /// biases for the MLP; zeros for the convex kinds.
    pub fn initial_weights(&self, seed: u64) -> ParamVector {
        let mut values = vec![0.0; self.dimension()];
        if let Architecture::Mlp(m) = &self.arch {
            let mut rng = seed::rng_for(seed, "init");
            for (range, a) in m.init_ranges() {
                for v in &mut values[range] {
                    *v = rng.random_range(-a..=a);
                }
            }
        }
        ParamVector::with_groups(values, self.groups.clone()).expect("finite init")
    }

    /// Mean loss, gradient and error rate of `batch` at `weights`.
    pub fn batch_gradient<S: Borrow<Sample>>(
        &self,
        weights: &ParamVector,
        batch: &[S],
    ) -> Result<BatchGradient, ModelError> {
        self.check_batch(weights, batch)?;
        let w = weights.values();
        let mut grad = vec![0.0; self.dimension()];
        let mut loss = 0.0;
        let mut wrong = 0usize;
        for sample in batch {
            let sample = sample.borrow();
            let eval = match &self.arch {
                Architecture::Quadratic(q) => {
                    let residual = quadratic_residual(q, w, &sample.features);
                    let (l, g) = q.loss_grad(&residual);
                    for (acc, gi) in grad.iter_mut().zip(g) {
                        *acc += gi;
                    }
                    SampleEval {
                        loss: l,
                        correct: true,
                    }
                }
                Architecture::Logistic(lin) => {
                    lin.accumulate_grad(w, &sample.features, class_of(sample), &mut grad)
                }
                Architecture::Mlp(m) => {
                    m.accumulate_grad(w, &sample.features, class_of(sample), &mut grad)
                }
            };
            loss += eval.loss;
            wrong += usize::from(!eval.correct);
        }
        let n = batch.len() as f64;
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(loss));
        }
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(BatchGradient {
            gradient: ParamVector::with_groups(grad, self.groups.clone())?,
            loss,
            error_rate: wrong as f64 / n,
        })
    }

    /// Mean loss and error rate without a gradient.
    pub fn evaluate<S: Borrow<Sample>>(
        &self,
        weights: &ParamVector,
        batch: &[S],
    ) -> Result<(f64, f64), ModelError> {
        self.check_batch(weights, batch)?;
        let w = weights.values();
        let mut loss = 0.0;
        let mut wrong = 0usize;
        for sample in batch {
            let sample = sample.borrow();
            let eval = match &self.arch {
                Architecture::Quadratic(q) => {
                    let residual = quadratic_residual(q, w, &sample.features);
                    SampleEval {
                        loss: q.loss_grad(&residual).0,
                        correct: true,
                    }
                }
                Architecture::Logistic(lin) => lin.eval(w, &sample.features, class_of(sample)),
                Architecture::Mlp(m) => m.eval(w, &sample.features, class_of(sample)),
            };
            loss += eval.loss;
            wrong += usize::from(!eval.correct);
        }
        let n = batch.len() as f64;
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(loss));
        }
        Ok((loss, wrong as f64 / n))
    }

    /// Central-difference gradient of the batch loss.
    ///
    /// The step actually taken is `(w + h) − (w − h)` as represented in
    /// floating point; if it rounds to zero for any coordinate the call fails
    /// instead of returning a silent zero.
    pub fn finite_difference_gradient<S: Borrow<Sample>>(
        &self,
        weights: &ParamVector,
        batch: &[S],
        step: f64,
    ) -> Result<ParamVector, ModelError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(ModelError::InvalidModel(format!(
                "step must be positive, got {step}"
            )));
        }
        self.check_batch(weights, batch)?;
        let mut probe = weights.values().to_vec();
        let mut out = Vec::with_capacity(probe.len());
        for k in 0..probe.len() {
            let w = probe[k];
            let (up, down) = (w + step, w - step);
            let taken = up - down;
            if taken == 0.0 {
                return Err(ModelError::StepUnderflow {
                    index: k,
                    step,
                    weight: w,
                });
            }
            probe[k] = up;
            let f_up = self.evaluate(&self.param_vector(probe.clone())?, batch)?.0;
            probe[k] = down;
            let f_down = self.evaluate(&self.param_vector(probe.clone())?, batch)?.0;
            probe[k] = w;
            out.push((f_up - f_down) / taken);
        }
        self.param_vector(out)
    }

    /// Exact `H(w) · v` of the batch loss, for kinds with an analytic Hessian.
    pub fn exact_hessian_vector<S: Borrow<Sample>>(
        &self,
        weights: &ParamVector,
        batch: &[S],
        v: &ParamVector,
    ) -> Result<ParamVector, ModelError> {
        self.check_batch(weights, batch)?;
        self.check_len("direction length", v.len())?;
        let out = match &self.arch {
            Architecture::Quadratic(q) => q.apply(v.values()),
            Architecture::Logistic(lin) => {
                let mut out = vec![0.0; self.dimension()];
                for sample in batch {
                    let sample = sample.borrow();
                    lin.accumulate_hvp(weights.values(), &sample.features, v.values(), &mut out);
                }
                let n = batch.len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
                out
            }
            Architecture::Mlp(_) => return Err(ModelError::Unsupported(ModelKind::Mlp)),
        };
        self.param_vector(out)
    }

    fn check_len(&self, what: &'static str, found: usize) -> Result<(), ModelError> {
        if found != self.dimension() {
            return Err(ModelError::DimensionMismatch {
                what,
                expected: self.dimension(),
                found,
            });
        }
        Ok(())
    }

    fn check_batch<S: Borrow<Sample>>(
        &self,
        weights: &ParamVector,
        batch: &[S],
    ) -> Result<(), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        self.check_len("weight length", weights.len())?;
        let inputs = self.input_dimension();
        for sample in batch {
            let sample = sample.borrow();
            if sample.features.len() != inputs {
                return Err(ModelError::DimensionMismatch {
                    what: "feature length",
                    expected: inputs,
                    found: sample.features.len(),
                });
            }
            match (self.classes(), sample.label) {
                (Some(classes), Label::Class(label)) if label >= classes => {
                    return Err(ModelError::LabelOutOfRange { label, classes });
                }
                (Some(_), Label::Target(_)) => {
                    return Err(ModelError::LabelKind {
                        kind: self.kind(),
                        expected: "class",
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn quadratic_residual(q: &QuadraticSpec, w: &[f64], offset: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(q.center())
        .zip(offset)
        .map(|((w, c), xi)| w - c - xi)
        .collect()
}

fn class_of(sample: &Sample) -> usize {
    match sample.label {
        Label::Class(c) => c,
        // check_batch rejects targets for classifiers before we get here
        Label::Target(_) => unreachable!("classifier sample without class label"),
    }
}
