//! Synthetic classification tasks.
//!
//! Features for class `c` are drawn from `N(mu_c, I)` where the class
//! centres `mu_c` are fixed per scenario and scaled by `separation`. A UE at
//! heterogeneity level `l` draws its samples uniformly from `l` classes.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HpflError, Result};

/// One UE's dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskShard {
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    label_set: Vec<usize>,
}

impl TaskShard {
    pub fn new(features: usize, inputs: Vec<f64>, labels: Vec<usize>, label_set: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(HpflError::InvalidArgument("shard must hold at least one sample".into()));
        }
        if inputs.len() != labels.len() * features {
            return Err(HpflError::DimensionMismatch {
                expected: labels.len() * features,
                got: inputs.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|l| !label_set.contains(l)) {
            return Err(HpflError::InvalidArgument(format!(
                "label {bad} outside the shard's label set"
            )));
        }
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(HpflError::NonFinite {
                what: "shard features",
                round: None,
                ue: None,
            });
        }
        Ok(TaskShard {
            features,
            inputs,
            labels,
            label_set,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_set(&self) -> &[usize] {
        &self.label_set
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.inputs.chunks_exact(self.features).zip(self.labels.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskFamily {
    pub classes: usize,
    pub features: usize,
    /// Scale of the class centres; larger means easier classification.
    pub separation: f64,
    pub min_samples: usize,
    pub max_samples: usize,
    pub test_samples: usize,
}

impl Default for TaskFamily {
    fn default() -> Self {
        TaskFamily {
            classes: 10,
            features: 8,
            separation: 1.5,
            min_samples: 40,
            max_samples: 120,
            test_samples: 60,
        }
    }
}

/// Train/test pair for one UE; both halves share the same label subset.
#[derive(Debug, Clone)]
pub struct UeData {
    pub train: TaskShard,
    pub test: TaskShard,
}

/// Fixed per-scenario class centres.
#[derive(Debug, Clone)]
pub struct ClassCentres {
    centres: Vec<Vec<f64>>,
}

impl ClassCentres {
    pub fn sample<R: Rng + ?Sized>(family: &TaskFamily, rng: &mut R) -> Self {
        let centres = (0..family.classes)
            .map(|_| {
                (0..family.features)
                    .map(|_| family.separation * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        ClassCentres { centres }
    }

    fn draw<R: Rng + ?Sized>(&self, label_set: &[usize], count: usize, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
        let mut inputs = Vec::with_capacity(count * self.centres[0].len());
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let label = *label_set.choose(rng).expect("label set is non-empty");
            for &mu in &self.centres[label] {
                let noise: f64 = StandardNormal.sample(rng);
                inputs.push(mu + noise);
            }
            labels.push(label);
        }
        (inputs, labels)
    }
}

/// Draw one UE's train/test shards at heterogeneity level `level`.
pub fn sample_ue_data<R: Rng + ?Sized>(
    family: &TaskFamily,
    centres: &ClassCentres,
    level: usize,
    rng: &mut R,
) -> Result<UeData> {
    if level == 0 || level > family.classes {
        return Err(HpflError::InvalidArgument(format!(
            "heterogeneity level {level} outside 1..={}",
            family.classes
        )));
    }
    let mut all: Vec<usize> = (0..family.classes).collect();
    all.shuffle(rng);
    let mut label_set: Vec<usize> = all[..level].to_vec();
    label_set.sort_unstable();

    let n_train = rng.gen_range(family.min_samples..=family.max_samples.max(family.min_samples));
    let (x, y) = centres.draw(&label_set, n_train, rng);
    let train = TaskShard::new(family.features, x, y, label_set.clone())?;
    let (x, y) = centres.draw(&label_set, family.test_samples.max(1), rng);
    let test = TaskShard::new(family.features, x, y, label_set)?;
    Ok(UeData { train, test })
}
