use crate::params::ParamVector;
use crate::tasks::TaskShard;

use super::softmax_in_place;

/// Multinomial logistic regression. Parameters are laid out as the
/// `classes x features` weight matrix (row-major) followed by the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    features: usize,
    classes: usize,
    l2: f64,
}

impl Logistic {
    pub fn new(features: usize, classes: usize, l2: f64) -> Self {
        Logistic { features, classes, l2 }
    }

    pub fn dim_for(features: usize, classes: usize) -> usize {
        classes * features + classes
    }

    pub fn dim(&self) -> usize {
        Self::dim_for(self.features, self.classes)
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let bias = &w[self.classes * self.features..];
        for (c, z) in out.iter_mut().enumerate() {
            let row = &w[c * self.features..(c + 1) * self.features];
            *z = bias[c] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict(&self, w: &ParamVector, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits(w.as_slice(), x, &mut z);
        argmax(&z)
    }

    pub fn loss(&self, w: &ParamVector, shard: &TaskShard) -> f64 {
        let mut z = vec![0.0; self.classes];
        let mut total = 0.0;
        for (x, y) in shard.samples() {
            self.logits(w.as_slice(), x, &mut z);
            let zy = z[y];
            let lse = softmax_in_place(&mut z);
            total += lse - zy;
        }
        total / shard.size() as f64 + 0.5 * self.l2 * w.norm_sq()
    }

    pub fn grad(&self, w: &ParamVector, shard: &TaskShard) -> ParamVector {
        let f = self.features;
        let mut g = vec![0.0; self.dim()];
        let mut z = vec![0.0; self.classes];
        for (x, y) in shard.samples() {
            self.logits(w.as_slice(), x, &mut z);
            softmax_in_place(&mut z);
            z[y] -= 1.0;
            self.accumulate_outer(&mut g, &z, x, f);
        }
        finish(g, shard.size(), self.l2, w)
    }

    pub fn hvp(&self, w: &ParamVector, shard: &TaskShard, v: &ParamVector) -> ParamVector {
        let f = self.features;
        let mut out = vec![0.0; self.dim()];
        let mut p = vec![0.0; self.classes];
        let mut dz = vec![0.0; self.classes];
        for (x, _) in shard.samples() {
            self.logits(w.as_slice(), x, &mut p);
            softmax_in_place(&mut p);
            // directional derivative of the logits along v
            self.logits(v.as_slice(), x, &mut dz);
            let mean: f64 = p.iter().zip(&dz).map(|(a, b)| a * b).sum();
            for (d, pc) in dz.iter_mut().zip(&p) {
                *d = pc * (*d - mean);
            }
            self.accumulate_outer(&mut out, &dz, x, f);
        }
        finish(out, shard.size(), self.l2, v)
    }

    fn accumulate_outer(&self, out: &mut [f64], delta: &[f64], x: &[f64], f: usize) {
        let bias_off = self.classes * f;
        for (c, d) in delta.iter().enumerate() {
            for (o, xi) in out[c * f..(c + 1) * f].iter_mut().zip(x) {
                *o += d * xi;
            }
            out[bias_off + c] += d;
        }
    }
}

fn finish(mut acc: Vec<f64>, n: usize, l2: f64, reg_dir: &ParamVector) -> ParamVector {
    let inv = 1.0 / n as f64;
    for (a, r) in acc.iter_mut().zip(reg_dir.as_slice()) {
        *a = *a * inv + l2 * r;
    }
    ParamVector::new(acc)
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}
