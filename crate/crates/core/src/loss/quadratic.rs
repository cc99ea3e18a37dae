use crate::error::{HpflError, Result};
use crate::params::ParamVector;

use super::Objective;

/// `f(w) = 0.5 (w - a)^T Q (w - a)` with symmetric `Q` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q: Vec<f64>,
    centre: ParamVector,
}

impl Quadratic {
    pub fn new(q: Vec<f64>, centre: ParamVector) -> Result<Self> {
        let d = centre.dim();
        if q.len() != d * d {
            return Err(HpflError::DimensionMismatch {
                expected: d * d,
                got: q.len(),
            });
        }
        for i in 0..d {
            for j in 0..i {
                if (q[i * d + j] - q[j * d + i]).abs() > 1e-12 * (1.0 + q[i * d + j].abs()) {
                    return Err(HpflError::InvalidArgument("Q must be symmetric".into()));
                }
            }
        }
        Ok(Quadratic { q, centre })
    }

    /// `f(w) = 0.5 * scale * ||w - a||^2`.
    pub fn isotropic(scale: f64, centre: ParamVector) -> Self {
        let d = centre.dim();
        let mut q = vec![0.0; d * d];
        for i in 0..d {
            q[i * d + i] = scale;
        }
        Quadratic { q, centre }
    }

    pub fn matrix(&self) -> &[f64] {
        &self.q
    }

    pub fn centre(&self) -> &ParamVector {
        &self.centre
    }

    fn apply(&self, v: &[f64]) -> ParamVector {
        let d = self.centre.dim();
        ParamVector::new(
            self.q
                .chunks_exact(d)
                .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.centre.dim()
    }

    fn loss(&self, w: &ParamVector) -> f64 {
        let r = w.sub(&self.centre);
        0.5 * r.dot(&self.apply(r.as_slice()))
    }

    fn grad(&self, w: &ParamVector) -> ParamVector {
        self.apply(w.sub(&self.centre).as_slice())
    }

    fn hvp(&self, _w: &ParamVector, v: &ParamVector) -> ParamVector {
        self.apply(v.as_slice())
    }
}
