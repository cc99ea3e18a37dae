use crate::params::ParamVector;
use crate::tasks::TaskShard;

use super::logistic::argmax;
use super::softmax_in_place;

/// `x -> softmax(W2 tanh(W1 x + b1) + b2)` with cross-entropy loss.
///
/// Layout: `W1` (hidden x features), `b1`, `W2` (classes x hidden), `b2`.
/// The Hessian-vector product is the exact forward-over-reverse R-operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    features: usize,
    hidden: usize,
    classes: usize,
    l2: f64,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

impl Mlp {
    pub fn new(features: usize, hidden: usize, classes: usize, l2: f64) -> Self {
        Mlp {
            features,
            hidden,
            classes,
            l2,
        }
    }

    pub fn dim_for(features: usize, hidden: usize, classes: usize) -> usize {
        hidden * features + hidden + classes * hidden + classes
    }

    pub fn dim(&self) -> usize {
        Self::dim_for(self.features, self.hidden, self.classes)
    }

    fn offsets(&self) -> Offsets {
        let b1 = self.hidden * self.features;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        Offsets { b1, w2, b2 }
    }

    /// Pre-activation of the hidden layer: `W1 x + b1` (or its directional
    /// derivative when `w` is a direction).
    fn hidden_pre(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let o = self.offsets();
        for (j, a) in out.iter_mut().enumerate() {
            let row = &w[j * self.features..(j + 1) * self.features];
            *a = w[o.b1 + j] + row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        }
    }

    fn output(&self, w: &[f64], h: &[f64], out: &mut [f64], with_bias: bool) {
        let o = self.offsets();
        for (c, z) in out.iter_mut().enumerate() {
            let row = &w[o.w2 + c * self.hidden..o.w2 + (c + 1) * self.hidden];
            let b = if with_bias { w[o.b2 + c] } else { 0.0 };
            *z = b + row.iter().zip(h).map(|(p, q)| p * q).sum::<f64>();
        }
    }

    pub fn predict(&self, w: &ParamVector, x: &[f64]) -> usize {
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.classes];
        self.hidden_pre(w.as_slice(), x, &mut h);
        h.iter_mut().for_each(|a| *a = a.tanh());
        self.output(w.as_slice(), &h, &mut z, true);
        argmax(&z)
    }

    pub fn loss(&self, w: &ParamVector, shard: &TaskShard) -> f64 {
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.classes];
        let mut total = 0.0;
        for (x, y) in shard.samples() {
            self.hidden_pre(w.as_slice(), x, &mut h);
            h.iter_mut().for_each(|a| *a = a.tanh());
            self.output(w.as_slice(), &h, &mut z, true);
            let zy = z[y];
            total += softmax_in_place(&mut z) - zy;
        }
        total / shard.size() as f64 + 0.5 * self.l2 * w.norm_sq()
    }

    pub fn grad(&self, w: &ParamVector, shard: &TaskShard) -> ParamVector {
        let ws = w.as_slice();
        let o = self.offsets();
        let mut g = vec![0.0; self.dim()];
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.classes];
        let mut dh = vec![0.0; self.hidden];
        for (x, y) in shard.samples() {
            self.hidden_pre(ws, x, &mut h);
            h.iter_mut().for_each(|a| *a = a.tanh());
            self.output(ws, &h, &mut z, true);
            softmax_in_place(&mut z);
            z[y] -= 1.0;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (c, dz) in z.iter().enumerate() {
                let row = o.w2 + c * self.hidden;
                for j in 0..self.hidden {
                    g[row + j] += dz * h[j];
                    dh[j] += ws[row + j] * dz;
                }
                g[o.b2 + c] += dz;
            }
            for j in 0..self.hidden {
                let da = dh[j] * (1.0 - h[j] * h[j]);
                for (k, xk) in x.iter().enumerate() {
                    g[j * self.features + k] += da * xk;
                }
                g[o.b1 + j] += da;
            }
        }
        finish(g, shard.size(), self.l2, w)
    }

    pub fn hvp(&self, w: &ParamVector, shard: &TaskShard, v: &ParamVector) -> ParamVector {
        let ws = w.as_slice();
        let vs = v.as_slice();
        let o = self.offsets();
        let (nh, nc) = (self.hidden, self.classes);
        let mut out = vec![0.0; self.dim()];
        let mut h = vec![0.0; nh];
        let mut rh = vec![0.0; nh];
        let mut p = vec![0.0; nc];
        let mut rz = vec![0.0; nc];
        let mut tmp = vec![0.0; nc];
        for (x, y) in shard.samples() {
            // forward pass and its R-derivative
            self.hidden_pre(ws, x, &mut h);
            self.hidden_pre(vs, x, &mut rh);
            for j in 0..nh {
                h[j] = h[j].tanh();
                rh[j] *= 1.0 - h[j] * h[j];
            }
            self.output(ws, &h, &mut p, true);
            softmax_in_place(&mut p);
            self.output(ws, &rh, &mut rz, false);
            self.output(vs, &h, &mut tmp, true);
            for c in 0..nc {
                rz[c] += tmp[c];
            }
            let mean: f64 = p.iter().zip(&rz).map(|(a, b)| a * b).sum();
            // R(dz) = R(softmax) since the label term is constant
            let rdz: Vec<f64> = p.iter().zip(&rz).map(|(pc, r)| pc * (r - mean)).collect();
            let mut dz = p.clone();
            dz[y] -= 1.0;

            for j in 0..nh {
                let mut dh = 0.0;
                let mut rdh = 0.0;
                for c in 0..nc {
                    let idx = o.w2 + c * nh + j;
                    dh += ws[idx] * dz[c];
                    rdh += vs[idx] * dz[c] + ws[idx] * rdz[c];
                    out[idx] += rdz[c] * h[j] + dz[c] * rh[j];
                }
                let slope = 1.0 - h[j] * h[j];
                let rda = rdh * slope - 2.0 * dh * h[j] * rh[j];
                for (k, xk) in x.iter().enumerate() {
                    out[j * self.features + k] += rda * xk;
                }
                out[o.b1 + j] += rda;
            }
            for c in 0..nc {
                out[o.b2 + c] += rdz[c];
            }
        }
        finish(out, shard.size(), self.l2, v)
    }
}

fn finish(mut acc: Vec<f64>, n: usize, l2: f64, reg_dir: &ParamVector) -> ParamVector {
    let inv = 1.0 / n as f64;
    for (a, r) in acc.iter_mut().zip(reg_dir.as_slice()) {
        *a = *a * inv + l2 * r;
    }
    ParamVector::new(acc)
}
