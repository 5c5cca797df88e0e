//! Flat dense vector arithmetic.
//!
//! Every weight, gradient, update and displacement in the crate is a
//! [`ParamVector`]: a contiguous `f64` buffer plus a per-element parameter
//! group tag. Binary operations require equal lengths and every public
//! operation rejects non-finite results, so a blow-up is reported at the
//! operation that produced it instead of propagating silently.
//!
//! Reductions accumulate strictly left to right, so results are
//! bit-reproducible across calls and across workers.

use thiserror::Error;

/// Small integer tag identifying a parameter group (e.g. weights vs biases).
pub type GroupId = u8;

/// Group tag used for ordinary weight matrices.
pub const WEIGHT_GROUP: GroupId = 0;
/// Group tag used for biases (excluded from weight decay by default).
pub const BIAS_GROUP: GroupId = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VecError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("group tag count {groups} does not match value count {values}")]
    GroupLength { values: usize, groups: usize },
    #[error("reduction over no vectors")]
    EmptyReduction,
}

/// Dense parameter-shaped vector with per-element group tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    groups: Vec<GroupId>,
}

impl ParamVector {
    /// Builds a vector whose elements all belong to [`WEIGHT_GROUP`].
    pub fn from_values(values: Vec<f64>) -> Result<Self, VecError> {
        let groups = vec![WEIGHT_GROUP; values.len()];
        Self::with_groups(values, groups)
    }

    pub fn with_groups(values: Vec<f64>, groups: Vec<GroupId>) -> Result<Self, VecError> {
        if values.len() != groups.len() {
            return Err(VecError::GroupLength {
                values: values.len(),
                groups: groups.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { values, groups })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            groups: vec![WEIGHT_GROUP; len],
        }
    }

    /// Zero vector carrying the same group layout as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            groups: self.groups.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same group layout, new values. Used by models to emit gradients.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, VecError> {
        Self::with_groups(values, self.groups.clone())
    }

    /// Element-wise product; group tags are taken from `self`.
    pub fn hadamard(&self, other: &ParamVector) -> Result<ParamVector, VecError> {
        self.zip_map(other, |a, b| a * b)
    }

    /// `alpha * self + y`; group tags are taken from `y`.
    pub fn axpy(&self, alpha: f64, y: &ParamVector) -> Result<ParamVector, VecError> {
        same_len(self, y)?;
        let values = self
            .values
            .iter()
            .zip(&y.values)
            .map(|(x, y)| alpha * x + y)
            .collect();
        y.with_values(values)
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector, VecError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector, VecError> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Result<ParamVector, VecError> {
        self.with_values(self.values.iter().map(|v| alpha * v).collect())
    }

    /// Euclidean norm, accumulated left to right.
    pub fn l2_norm(&self) -> Result<f64, VecError> {
        check_finite(&self.values)?;
        let sum_sq = self.values.iter().fold(0.0, |acc, v| acc + v * v);
        let norm = sum_sq.sqrt();
        if !norm.is_finite() {
            return Err(VecError::NonFinite {
                index: 0,
                value: norm,
            });
        }
        Ok(norm)
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64, VecError> {
        same_len(self, other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc + a * b))
    }

    /// Largest absolute component; 0 for an empty vector.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Checks the finiteness invariant, reporting the first offending index.
    pub fn check_finite(&self) -> Result<(), VecError> {
        check_finite(&self.values)
    }

    fn zip_map(
        &self,
        other: &ParamVector,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ParamVector, VecError> {
        same_len(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        self.with_values(values)
    }
}

/// Sums vectors in iteration order. All inputs must share one length.
pub fn sum_ordered<'a, I>(len: usize, items: I) -> Result<ParamVector, VecError>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut iter = items.into_iter().peekable();
    let mut acc = match iter.peek() {
        Some(first) => first.zeros_like(),
        None => ParamVector::zeros(len),
    };
    if acc.len() != len {
        return Err(VecError::LengthMismatch {
            left: len,
            right: acc.len(),
        });
    }
    for item in iter {
        same_len(&acc, item)?;
        for (a, b) in acc.values.iter_mut().zip(&item.values) {
            *a += b;
        }
    }
    acc.check_finite()?;
    Ok(acc)
}

/// Sums vectors as a balanced binary tree over the given order (halves split
/// at `len / 2`), the shape of a recursive-doubling allreduce.
///
/// For a power-of-two count of identical inputs the result is exact.
pub fn sum_pairwise(items: &[&ParamVector]) -> Result<ParamVector, VecError> {
    match items {
        [] => Err(VecError::EmptyReduction),
        [only] => Ok((*only).clone()),
        _ => {
            let (left, right) = items.split_at(items.len() / 2);
            sum_pairwise(left)?.add(&sum_pairwise(right)?)
        }
    }
}

fn same_len(a: &ParamVector, b: &ParamVector) -> Result<(), VecError> {
    if a.len() != b.len() {
        return Err(VecError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<(), VecError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(VecError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
