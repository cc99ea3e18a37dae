//! Differentiable per-UE objectives.
//!
//! An [`Objective`] exposes value, gradient and Hessian-vector product. The
//! Hessian itself is never formed; every second-order quantity in the crate
//! is assembled from [`Objective::hvp`].

mod logistic;
mod mlp;
mod quadratic;

pub use logistic::Logistic;
pub use mlp::Mlp;
pub use quadratic::Quadratic;

use serde::{Deserialize, Serialize};

use crate::params::ParamVector;
use crate::tasks::TaskShard;

pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn loss(&self, w: &ParamVector) -> f64;
    fn grad(&self, w: &ParamVector) -> ParamVector;
    fn hvp(&self, w: &ParamVector, v: &ParamVector) -> ParamVector;
}

/// Model family used for classification shards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    /// Multinomial logistic regression with an L2 penalty.
    Logistic { l2: f64 },
    /// One tanh hidden layer followed by a softmax output.
    Mlp { hidden: usize, l2: f64 },
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel::Logistic { l2: 1e-3 }
    }
}

impl LossModel {
    pub fn dim(&self, features: usize, classes: usize) -> usize {
        match *self {
            LossModel::Logistic { .. } => Logistic::dim_for(features, classes),
            LossModel::Mlp { hidden, .. } => Mlp::dim_for(features, hidden, classes),
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self, LossModel::Logistic { .. })
    }

    /// Bind the model to one shard, producing an [`Objective`].
    pub fn bind<'a>(&self, shard: &'a TaskShard, classes: usize) -> ShardObjective<'a> {
        let inner = match *self {
            LossModel::Logistic { l2 } => BoundModel::Logistic(Logistic::new(shard.features(), classes, l2)),
            LossModel::Mlp { hidden, l2 } => BoundModel::Mlp(Mlp::new(shard.features(), hidden, classes, l2)),
        };
        ShardObjective { model: inner, shard }
    }

    pub fn predict(&self, w: &ParamVector, features: usize, classes: usize, x: &[f64]) -> usize {
        match *self {
            LossModel::Logistic { l2 } => Logistic::new(features, classes, l2).predict(w, x),
            LossModel::Mlp { hidden, l2 } => Mlp::new(features, hidden, classes, l2).predict(w, x),
        }
    }
}

#[derive(Debug, Clone)]
enum BoundModel {
    Logistic(Logistic),
    Mlp(Mlp),
}

/// A [`LossModel`] evaluated over one [`TaskShard`].
#[derive(Debug, Clone)]
pub struct ShardObjective<'a> {
    model: BoundModel,
    shard: &'a TaskShard,
}

impl ShardObjective<'_> {
    pub fn shard(&self) -> &TaskShard {
        self.shard
    }
}

impl Objective for ShardObjective<'_> {
    fn dim(&self) -> usize {
        match &self.model {
            BoundModel::Logistic(m) => m.dim(),
            BoundModel::Mlp(m) => m.dim(),
        }
    }

    fn loss(&self, w: &ParamVector) -> f64 {
        match &self.model {
            BoundModel::Logistic(m) => m.loss(w, self.shard),
            BoundModel::Mlp(m) => m.loss(w, self.shard),
        }
    }

    fn grad(&self, w: &ParamVector) -> ParamVector {
        match &self.model {
            BoundModel::Logistic(m) => m.grad(w, self.shard),
            BoundModel::Mlp(m) => m.grad(w, self.shard),
        }
    }

    fn hvp(&self, w: &ParamVector, v: &ParamVector) -> ParamVector {
        match &self.model {
            BoundModel::Logistic(m) => m.hvp(w, self.shard, v),
            BoundModel::Mlp(m) => m.hvp(w, self.shard, v),
        }
    }
}

/// Numerically stable in-place softmax; returns log-sum-exp of the input.
pub(crate) fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}
