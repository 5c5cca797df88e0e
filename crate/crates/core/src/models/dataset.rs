use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Label, ModelError, ModelKind, Sample};
use crate::seed;

/// An in-memory dataset. `n_classes == 0` means real-valued targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub dimension: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Deterministic split: the last `round(n · validation_fraction)` samples
    /// become the validation set. Generated samples are already in random
    /// order, so no shuffle is applied here.
    pub fn split(&self, validation_fraction: f64) -> Result<(Dataset, Dataset), ModelError> {
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(ModelError::InvalidModel(format!(
                "validation fraction {validation_fraction} outside [0, 1)"
            )));
        }
        let n_val = (self.len() as f64 * validation_fraction).round() as usize;
        let n_train = self.len() - n_val;
        if n_train == 0 {
            return Err(ModelError::InvalidCount("training split"));
        }
        let part = |samples: &[Sample]| Dataset {
            samples: samples.to_vec(),
            dimension: self.dimension,
            n_classes: self.n_classes,
        };
        Ok((
            part(&self.samples[..n_train]),
            part(&self.samples[n_train..]),
        ))
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.n_classes];
        for s in &self.samples {
            if let Label::Class(c) = s.label {
                hist[c] += 1;
            }
        }
        hist
    }
}

/// Parameters of a synthetic dataset.
///
/// Classification data: one center per class at distance `separation` from
/// the origin (orthonormal directions when `n_classes <= dimension`). Each
/// sample is its class center plus isotropic Gaussian noise of expected norm
/// about `noise`, clipped to radius `δ/2 − margin` where `δ` is the smallest
/// distance between centers. Every sample is therefore at least `margin` away
/// from the nearest-centroid decision boundary, so the classes are linearly
/// separable.
///
/// Quadratic data: features are Gaussian offsets of expected norm `noise`
/// and every label is `Target(0.0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: ModelKind,
    pub n_samples: usize,
    pub dimension: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
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

impl DatasetSpec {
    pub fn new(
        kind: ModelKind,
        n_samples: usize,
        dimension: usize,
        n_classes: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind,
            n_samples,
            dimension,
            n_classes,
            seed,
            separation: default_separation(),
            noise: default_noise(),
            margin: default_margin(),
        }
    }
}

pub fn make_synthetic_dataset(spec: &DatasetSpec) -> Result<Dataset, ModelError> {
    if spec.n_samples == 0 {
        return Err(ModelError::InvalidCount("n_samples"));
    }
    if spec.dimension == 0 {
        return Err(ModelError::InvalidCount("dimension"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(ModelError::InvalidModel(format!(
            "noise {} must be non-negative",
            spec.noise
        )));
    }
    let mut rng = seed::rng_for(spec.seed, "dataset");
    let per_component = spec.noise / (spec.dimension as f64).sqrt();
    let gaussian = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..spec.dimension)
            .map(|_| per_component * seed::normal(rng))
            .collect()
    };

    if spec.kind == ModelKind::Quadratic {
        let samples = (0..spec.n_samples)
            .map(|_| Sample {
                features: gaussian(&mut rng),
                label: Label::Target(0.0),
            })
            .collect();
        return Ok(Dataset {
            samples,
            dimension: spec.dimension,
            n_classes: 0,
        });
    }

    if spec.n_classes < 2 {
        return Err(ModelError::InvalidModel(
            "a classifier needs at least 2 classes".into(),
        ));
    }
    if !(spec.separation > 0.0 && spec.separation.is_finite()) {
        return Err(ModelError::InvalidModel(
            "separation must be positive".into(),
        ));
    }
    let centers = class_centers(&mut rng, spec.n_classes, spec.dimension, spec.separation);
    let min_gap = min_pairwise_distance(&centers);
    let radius = 0.5 * min_gap - spec.margin;
    if radius <= 0.0 || radius.is_nan() || spec.margin < 0.0 {
        return Err(ModelError::InvalidModel(format!(
            "margin {} leaves no room for noise (half center gap {})",
            spec.margin,
            0.5 * min_gap
        )));
    }

    let samples = (0..spec.n_samples)
        .map(|_| {
            let class = rng.random_range(0..spec.n_classes);
            let mut noise = gaussian(&mut rng);
            let norm = noise.iter().fold(0.0, |a, x| a + x * x).sqrt();
            if norm > radius {
                let shrink = radius / norm;
                noise.iter_mut().for_each(|x| *x *= shrink);
            }
            let features = centers[class]
                .iter()
                .zip(noise)
                .map(|(c, x)| c + x)
                .collect();
            Sample::class(features, class)
        })
        .collect();
    Ok(Dataset {
        samples,
        dimension: spec.dimension,
        n_classes: spec.n_classes,
    })
}

fn class_centers(
    rng: &mut rand_chacha::ChaCha8Rng,
    n_classes: usize,
    dimension: usize,
    separation: f64,
) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    while basis.len() < n_classes {
        let mut v: Vec<f64> = (0..dimension).map(|_| seed::normal(&mut *rng)).collect();
        // Gram-Schmidt while an orthogonal direction is still available
        if basis.len() < dimension {
            for b in &basis {
                let proj = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
        .into_iter()
        .map(|b| b.into_iter().map(|x| separation * x).collect())
        .collect()
}

fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a
                .iter()
                .zip(b)
                .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}
