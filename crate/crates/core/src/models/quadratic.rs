//! Convex quadratic objective with diagonal-plus-low-rank curvature.
//!
//! Per-sample loss is `½ rᵀ H r` with `r = w − c − ξ`, where `ξ` is the
//! sample's feature vector (a noise offset of the minimiser). With all-zero
//! offsets this is the deterministic quadratic `½ (w − c)ᵀ H (w − c)`.
//! `H = diag(d) + Σ_j u_j u_jᵀ` with `d ≥ 0`, so `H` is positive semidefinite.

use rand::Rng;

use super::ModelError;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    center: Vec<f64>,
    diagonal: Vec<f64>,
    low_rank: Vec<Vec<f64>>,
}

impl QuadraticSpec {
    pub fn new(
        center: Vec<f64>,
        diagonal: Vec<f64>,
        low_rank: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let dim = center.len();
        if dim == 0 {
            return Err(ModelError::InvalidModel(
                "quadratic dimension must be positive".into(),
            ));
        }
        if diagonal.len() != dim {
            return Err(ModelError::InvalidModel(format!(
                "diagonal has {} entries, center has {dim}",
                diagonal.len()
            )));
        }
        if let Some(bad) = diagonal.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(ModelError::InvalidModel(format!(
                "diagonal curvature must be finite and non-negative, got {bad}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::InvalidModel("center must be finite".into()));
        }
        for (j, col) in low_rank.iter().enumerate() {
            if col.len() != dim || col.iter().any(|u| !u.is_finite()) {
                return Err(ModelError::InvalidModel(format!(
                    "low-rank column {j} must have {dim} finite entries"
                )));
            }
        }
        Ok(Self {
            center,
            diagonal,
            low_rank,
        })
    }

    /// `H = I`, minimiser at `center`.
    pub fn identity(center: Vec<f64>) -> Result<Self, ModelError> {
        let dim = center.len();
        Self::new(center, vec![1.0; dim], Vec::new())
    }

    /// Random spec: diagonal uniform in `[min_curv, max_curv]`, `rank` Gaussian
    /// columns scaled by `1/sqrt(dim)`, Gaussian center.
    pub fn generate(
        dim: usize,
        rank: usize,
        min_curv: f64,
        max_curv: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if !(min_curv >= 0.0 && max_curv >= min_curv && max_curv.is_finite()) {
            return Err(ModelError::InvalidModel(format!(
                "curvature range [{min_curv}, {max_curv}] is invalid"
            )));
        }
        let mut rng = seed::rng_for(seed, "quadratic");
        let diagonal = (0..dim)
            .map(|_| {
                if max_curv > min_curv {
                    rng.random_range(min_curv..=max_curv)
                } else {
                    min_curv
                }
            })
            .collect();
        let scale = 1.0 / (dim as f64).sqrt();
        let low_rank = (0..rank)
            .map(|_| (0..dim).map(|_| scale * seed::normal(&mut rng)).collect())
            .collect();
        let center = (0..dim).map(|_| seed::normal(&mut rng)).collect();
        Self::new(center, diagonal, low_rank)
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn low_rank(&self) -> &[Vec<f64>] {
        &self.low_rank
    }

    /// `H · v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diagonal.iter().zip(v).map(|(d, x)| d * x).collect();
        for col in &self.low_rank {
            let proj = dot(col, v);
            for (o, u) in out.iter_mut().zip(col) {
                *o += u * proj;
            }
        }
        out
    }

    /// Loss and gradient `(½ rᵀHr, Hr)` for one residual.
    pub(crate) fn loss_grad(&self, residual: &[f64]) -> (f64, Vec<f64>) {
        let hr = self.apply(residual);
        (0.5 * dot(residual, &hr), hr)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}
