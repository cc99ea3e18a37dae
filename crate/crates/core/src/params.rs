//! Flat parameter vectors.
//!
//! Every update and aggregation rule in the simulator speaks in terms of a
//! [`ParamVector`]: local models, edge models, the global model and all
//! gradients share one fixed dimension per scenario.

use serde::{Deserialize, Serialize};

use crate::error::{HpflError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Errors with [`HpflError::NonFinite`] if any entry is NaN or infinite.
    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(HpflError::NonFinite {
                what,
                round: None,
                ue: None,
            })
        }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self + scale * other`
    pub fn add_scaled(&self, scale: f64, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim(), other.dim());
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + scale * b).collect())
    }

    /// In-place `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &ParamVector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scaled(&self, scale: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| a * scale).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        self.add_scaled(-1.0, other)
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.sub(other).norm()
    }

    /// Arithmetic mean with a fixed left-to-right summation order.
    pub fn mean<'a, I>(vectors: I) -> Result<ParamVector>
    where
        I: IntoIterator<Item = &'a ParamVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next().ok_or(HpflError::EmptyAggregate)?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for v in iter {
            if v.dim() != acc.dim() {
                return Err(HpflError::DimensionMismatch {
                    expected: acc.dim(),
                    got: v.dim(),
                });
            }
            acc.axpy(1.0, v);
            count += 1;
        }
        Ok(acc.scaled(1.0 / count as f64))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_empty_is_an_error() {
        let empty: Vec<ParamVector> = vec![];
        assert!(matches!(ParamVector::mean(&empty), Err(HpflError::EmptyAggregate)));
    }

    #[test]
    fn mean_rejects_mixed_dimensions() {
        let vs = vec![ParamVector::zeros(2), ParamVector::zeros(3)];
        assert!(ParamVector::mean(&vs).is_err());
    }

    #[test]
    fn axpy_and_norm() {
        let mut a = ParamVector::new(vec![3.0, 0.0]);
        a.axpy(2.0, &ParamVector::new(vec![0.0, 2.0]));
        assert_eq!(a.as_slice(), &[3.0, 4.0]);
        assert_eq!(a.norm(), 5.0);
    }
}
