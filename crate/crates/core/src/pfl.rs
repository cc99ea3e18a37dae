//! Personalized (MAML-style) objective, local update and smoothness constants.
//!
//! The personalized loss of a UE is its plain loss evaluated after one
//! adaptation step, `F(w) = f(w - alpha * grad f(w))`, and its gradient is
//! `(I - alpha * H(w)) * grad f(w - alpha * grad f(w))`. The Hessian enters
//! only through a Hessian-vector product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HpflError, Result};
use crate::loss::Objective;
use crate::params::ParamVector;

fn non_finite(what: &'static str) -> HpflError {
    HpflError::NonFinite {
        what,
        round: None,
        ue: None,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(HpflError::InvalidArgument(format!("alpha must be >= 0, got {alpha}")))
    }
}

/// Adapted parameters `w - alpha * grad f(w)`.
pub fn adapt(obj: &dyn Objective, w: &ParamVector, alpha: f64) -> ParamVector {
    if alpha == 0.0 {
        return w.clone();
    }
    w.add_scaled(-alpha, &obj.grad(w))
}

pub fn meta_loss(obj: &dyn Objective, w: &ParamVector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let theta = adapt(obj, w, alpha);
    theta.check_finite("adapted parameters")?;
    let value = obj.loss(&theta);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(non_finite("meta-loss"))
    }
}

pub fn meta_grad(obj: &dyn Objective, w: &ParamVector, alpha: f64) -> Result<ParamVector> {
    check_alpha(alpha)?;
    let g = obj.grad(w);
    g.check_finite("gradient")?;
    if alpha == 0.0 {
        return Ok(g);
    }
    let theta = w.add_scaled(-alpha, &g);
    let g_adapted = obj.grad(&theta);
    g_adapted.check_finite("adapted gradient")?;
    let correction = obj.hvp(w, &g_adapted);
    let out = g_adapted.add_scaled(-alpha, &correction);
    out.check_finite("meta-gradient")?;
    Ok(out)
}

/// One full-batch personalized step from the received global model.
pub fn local_update(obj: &dyn Objective, w_global: &ParamVector, alpha: f64, beta: f64) -> Result<ParamVector> {
    Ok(local_update_with_grad(obj, w_global, alpha, beta)?.0)
}

/// As [`local_update`] but also returns the meta-gradient that produced the step.
pub fn local_update_with_grad(
    obj: &dyn Objective,
    w_global: &ParamVector,
    alpha: f64,
    beta: f64,
) -> Result<(ParamVector, ParamVector)> {
    if !(beta > 0.0) {
        return Err(HpflError::InvalidArgument(format!("beta must be > 0, got {beta}")));
    }
    let g = meta_grad(obj, w_global, alpha)?;
    Ok((w_global.add_scaled(-beta, &g), g))
}

/// Smoothness and diversity constants, plus the quantities derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    /// Gradient Lipschitz constant.
    pub l: f64,
    /// Gradient norm bound.
    pub c: f64,
    /// Hessian Lipschitz constant.
    pub rho_h: f64,
    pub gamma_g: f64,
    pub gamma_h: f64,
    /// Smoothness of the personalized objective: `4L + alpha * rho_H * C`.
    pub l_f: f64,
    /// Personalized gradient diversity: `3 C^2 alpha^2 gamma_H^2 + 192 gamma_G^2`.
    pub gamma_f_sq: f64,
}

impl SmoothnessConstants {
    pub fn from_estimates(l: f64, c: f64, rho_h: f64, gamma_g: f64, gamma_h: f64, alpha: f64) -> Self {
        SmoothnessConstants {
            l,
            c,
            rho_h,
            gamma_g,
            gamma_h,
            l_f: 4.0 * l + alpha * rho_h * c,
            gamma_f_sq: 3.0 * c * c * alpha * alpha * gamma_h * gamma_h + 192.0 * gamma_g * gamma_g,
        }
    }
}

/// Where and how densely to probe the objectives.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub centre: ParamVector,
    pub radius: f64,
    pub probe_count: usize,
    /// Random unit directions used for Hessian-based quantities.
    pub directions: usize,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn new(centre: ParamVector, probe_count: usize, seed: u64) -> Self {
        ProbeConfig {
            centre,
            radius: 1.0,
            probe_count,
            directions: 8,
            seed,
        }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> ParamVector {
    loop {
        let v = ParamVector::new((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let n = v.norm();
        if n > 1e-12 {
            return v.scaled(1.0 / n);
        }
    }
}

/// Sampling-based estimates of L, C, rho_H, gamma_G and gamma_H.
///
/// `groups[k]` holds the objectives of the UEs served by edge server `k`;
/// diversity averages weight every edge server equally and every UE equally
/// within its server. All quantities are maxima over probe points drawn
/// uniformly from the ball `probe.centre + probe.radius * B`, so they are
/// lower bounds of the true suprema over that ball.
pub fn estimate_constants(
    groups: &[Vec<&dyn Objective>],
    alpha: f64,
    probe: &ProbeConfig,
) -> Result<SmoothnessConstants> {
    check_alpha(alpha)?;
    if probe.probe_count < 2 {
        return Err(HpflError::InvalidArgument("probe_count must be >= 2".into()));
    }
    if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
        return Err(HpflError::InvalidArgument(
            "every edge group needs at least one objective".into(),
        ));
    }
    let dim = probe.centre.dim();
    if let Some(bad) = groups.iter().flatten().find(|o| o.dim() != dim) {
        return Err(HpflError::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    if !(probe.radius > 0.0) {
        return Err(HpflError::DegenerateSampling("probe radius must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let points: Vec<ParamVector> = (0..probe.probe_count)
        .map(|_| {
            let dir = unit_direction(&mut rng, dim);
            let r = probe.radius * rng.gen::<f64>().powf(1.0 / dim as f64);
            probe.centre.add_scaled(r, &dir)
        })
        .collect();
    let directions: Vec<ParamVector> = (0..probe.directions.max(1))
        .map(|_| unit_direction(&mut rng, dim))
        .collect();

    let all: Vec<&dyn Objective> = groups.iter().flatten().copied().collect();
    let weights: Vec<f64> = groups
        .iter()
        .flat_map(|g| std::iter::repeat_n(1.0 / (groups.len() * g.len()) as f64, g.len()))
        .collect();

    // grads[p][u], hvps[p][d][u]
    let grads: Vec<Vec<ParamVector>> = points.iter().map(|w| all.iter().map(|o| o.grad(w)).collect()).collect();
    let hvps: Vec<Vec<Vec<ParamVector>>> = points
        .iter()
        .map(|w| {
            directions
                .iter()
                .map(|v| all.iter().map(|o| o.hvp(w, v)).collect())
                .collect()
        })
        .collect();

    let mut l: f64 = 0.0;
    let mut c: f64 = 0.0;
    let mut rho_h: f64 = 0.0;
    let mut gamma_g_sq: f64 = 0.0;
    let mut gamma_h_sq: f64 = 0.0;
    let mut informative_pairs = 0usize;

    for p in 0..points.len() {
        for g in &grads[p] {
            c = c.max(g.norm());
        }
        for per_dir in &hvps[p] {
            for hv in per_dir {
                l = l.max(hv.norm());
            }
        }
        gamma_g_sq = gamma_g_sq.max(weighted_spread(&grads[p], &weights));
        for per_dir in &hvps[p] {
            gamma_h_sq = gamma_h_sq.max(weighted_spread(per_dir, &weights));
        }
        for q in (p + 1)..points.len() {
            let gap = points[p].distance(&points[q]);
            if gap <= 1e-12 {
                continue;
            }
            informative_pairs += 1;
            for u in 0..all.len() {
                l = l.max(grads[p][u].distance(&grads[q][u]) / gap);
                for (hp, hq) in hvps[p].iter().zip(&hvps[q]) {
                    rho_h = rho_h.max(hp[u].distance(&hq[u]) / gap);
                }
            }
        }
    }
    if informative_pairs == 0 {
        return Err(HpflError::DegenerateSampling("all probe points coincide".into()));
    }
    let out = SmoothnessConstants::from_estimates(l, c, rho_h, gamma_g_sq.sqrt(), gamma_h_sq.sqrt(), alpha);
    if [out.l, out.c, out.rho_h, out.gamma_g, out.gamma_h]
        .iter()
        .all(|x| x.is_finite())
    {
        Ok(out)
    } else {
        Err(non_finite("smoothness constants"))
    }
}

/// Weighted mean of `||x_u - mean||^2` where `mean` uses the same weights.
fn weighted_spread(xs: &[ParamVector], weights: &[f64]) -> f64 {
    let mut mean = ParamVector::zeros(xs[0].dim());
    for (x, w) in xs.iter().zip(weights) {
        mean.axpy(*w, x);
    }
    xs.iter().zip(weights).map(|(x, w)| w * x.sub(&mean).norm_sq()).sum()
}

/// The two constants of the per-round loss-change bound:
/// `phi = 5 beta S^2 / A` and `nu = 10 beta K gamma_F^2 / A + 5 beta S^2 K gamma_F^2 / A`.
pub fn bound_constants(beta: f64, s: usize, a: usize, k: usize, gamma_f_sq: f64) -> Result<(f64, f64)> {
    if a == 0 {
        return Err(HpflError::InvalidArgument("A must be >= 1".into()));
    }
    let (s2, a, k) = ((s * s) as f64, a as f64, k as f64);
    let phi = 5.0 * beta * s2 / a;
    let nu = 10.0 * beta * k * gamma_f_sq / a + 5.0 * beta * s2 * k * gamma_f_sq / a;
    Ok((phi, nu))
}
