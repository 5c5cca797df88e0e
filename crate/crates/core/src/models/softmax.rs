//! Softmax classifiers: multinomial logistic regression and a one-hidden-layer
//! tanh MLP, both trained with cross-entropy.
//!
//! Parameter layouts (row-major, output-major):
//! - logistic regression: `W (C×F)`, then `b (C)`
//! - MLP: `W1 (H×F)`, `b1 (H)`, `W2 (C×H)`, `b2 (C)`
//!
//! Weight matrices are tagged [`WEIGHT_GROUP`], biases [`BIAS_GROUP`].

use crate::vecmath::{GroupId, BIAS_GROUP, WEIGHT_GROUP};

/// Numerically stable `(log Σ exp z, softmax(z))`.
pub(crate) fn log_softmax(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z));
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum = exps.iter().fold(0.0, |a, e| a + e);
    let lse = max + sum.ln();
    (lse, exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the largest logit, lowest index on ties.
pub(crate) fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (k, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = k;
        }
    }
    best
}

/// Per-sample outcome of a classifier pass.
pub(crate) struct SampleEval {
    pub loss: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Linear {
    pub inputs: usize,
    pub classes: usize,
}

impl Linear {
    pub fn groups(&self) -> Vec<GroupId> {
        let mut g = vec![WEIGHT_GROUP; self.classes * self.inputs];
        g.extend(std::iter::repeat_n(BIAS_GROUP, self.classes));
        g
    }

    pub fn logits(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let (weights, bias) = w.split_at(self.classes * self.inputs);
        weights
            .chunks_exact(self.inputs)
            .zip(bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (a, b)| acc + a * b))
            .collect()
    }

    pub fn eval(&self, w: &[f64], x: &[f64], label: usize) -> SampleEval {
        let logits = self.logits(w, x);
        let (lse, _) = log_softmax(&logits);
        SampleEval {
            loss: lse - logits[label],
            correct: argmax(&logits) == label,
        }
    }

    /// Adds this sample's gradient into `grad`.
    pub fn accumulate_grad(
        &self,
        w: &[f64],
        x: &[f64],
        label: usize,
        grad: &mut [f64],
    ) -> SampleEval {
        let logits = self.logits(w, x);
        let (lse, probs) = log_softmax(&logits);
        let (gw, gb) = grad.split_at_mut(self.classes * self.inputs);
        for (c, p) in probs.iter().enumerate() {
            let delta = p - if c == label { 1.0 } else { 0.0 };
            for (g, xi) in gw[c * self.inputs..(c + 1) * self.inputs].iter_mut().zip(x) {
                *g += delta * xi;
            }
            gb[c] += delta;
        }
        SampleEval {
            loss: lse - logits[label],
            correct: argmax(&logits) == label,
        }
    }

    /// Adds this sample's Hessian-vector product into `out`.
    ///
    /// For augmented input `x̃ = [x; 1]` and direction `V` (same layout as the
    /// weights), the per-sample product is `s ⊗ x̃` with
    /// `s = p ⊙ (V x̃ − pᵀ V x̃)`.
    pub fn accumulate_hvp(&self, w: &[f64], x: &[f64], v: &[f64], out: &mut [f64]) {
        let (_, probs) = log_softmax(&self.logits(w, x));
        let directional = self.logits(v, x);
        let mean = probs
            .iter()
            .zip(&directional)
            .fold(0.0, |a, (p, d)| a + p * d);
        let (ow, ob) = out.split_at_mut(self.classes * self.inputs);
        for c in 0..self.classes {
            let s = probs[c] * (directional[c] - mean);
            for (o, xi) in ow[c * self.inputs..(c + 1) * self.inputs].iter_mut().zip(x) {
                *o += s * xi;
            }
            ob[c] += s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl Mlp {
    fn offsets(&self) -> Offsets {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            end: b2 + self.classes,
        }
    }

    pub fn groups(&self) -> Vec<GroupId> {
        let o = self.offsets();
        let mut g = vec![WEIGHT_GROUP; o.end];
        g[o.b1..o.w2].fill(BIAS_GROUP);
        g[o.b2..o.end].fill(BIAS_GROUP);
        g
    }

    /// `(index range, bound)` per weight matrix for Glorot-uniform init.
    pub fn init_ranges(&self) -> [(std::ops::Range<usize>, f64); 2] {
        let o = self.offsets();
        let a1 = (6.0 / (self.inputs + self.hidden) as f64).sqrt();
        let a2 = (6.0 / (self.hidden + self.classes) as f64).sqrt();
        [(o.w1..o.b1, a1), (o.w2..o.b2, a2)]
    }

    fn forward(&self, w: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let o = self.offsets();
        let hidden: Vec<f64> = w[o.w1..o.b1]
            .chunks_exact(self.inputs)
            .zip(&w[o.b1..o.w2])
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (a, b)| acc + a * b).tanh())
            .collect();
        let logits = w[o.w2..o.b2]
            .chunks_exact(self.hidden)
            .zip(&w[o.b2..o.end])
            .map(|(row, b)| row.iter().zip(&hidden).fold(*b, |acc, (a, h)| acc + a * h))
            .collect();
        (hidden, logits)
    }

    pub fn eval(&self, w: &[f64], x: &[f64], label: usize) -> SampleEval {
        let (_, logits) = self.forward(w, x);
        let (lse, _) = log_softmax(&logits);
        SampleEval {
            loss: lse - logits[label],
            correct: argmax(&logits) == label,
        }
    }

    pub fn accumulate_grad(
        &self,
        w: &[f64],
        x: &[f64],
        label: usize,
        grad: &mut [f64],
    ) -> SampleEval {
        let o = self.offsets();
        let (hidden, logits) = self.forward(w, x);
        let (lse, probs) = log_softmax(&logits);

        let mut d_hidden = vec![0.0; self.hidden];
        for (c, p) in probs.iter().enumerate() {
            let delta = p - if c == label { 1.0 } else { 0.0 };
            let row = o.w2 + c * self.hidden;
            for (h, a) in hidden.iter().enumerate() {
                grad[row + h] += delta * a;
                d_hidden[h] += w[row + h] * delta;
            }
            grad[o.b2 + c] += delta;
        }
        for (h, a) in hidden.iter().enumerate() {
            let dz = d_hidden[h] * (1.0 - a * a);
            let row = o.w1 + h * self.inputs;
            for (i, xi) in x.iter().enumerate() {
                grad[row + i] += dz * xi;
            }
            grad[o.b1 + h] += dz;
        }
        SampleEval {
            loss: lse - logits[label],
            correct: argmax(&logits) == label,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_survives_huge_logits() {
        let (lse, p) = log_softmax(&[1000.0, 1000.0]);
        assert!((lse - (1000.0 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(p, vec![0.5, 0.5]);
        let (lse, _) = log_softmax(&[-1e4, 0.0]);
        assert!(lse.is_finite());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn mlp_layout() {
        let m = Mlp {
            inputs: 4,
            hidden: 8,
            classes: 3,
        };
        let g = m.groups();
        assert_eq!(g.len(), 4 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(g.iter().filter(|&&x| x == BIAS_GROUP).count(), 11);
        assert_eq!(g[32], BIAS_GROUP);
        assert_eq!(g[40], WEIGHT_GROUP);
    }
}
