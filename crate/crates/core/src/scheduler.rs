//! Edge-server selection.
//!
//! An edge server is worth scheduling when its weighted importance covers its
//! weighted latency: `rho * phi * I_k >= (1 - rho) * O_k`, where `I_k` is the
//! squared norm of its cached mean meta-gradient. Servers close to the
//! staleness bound are forced in, the result is capped at `A_max` by net
//! score, and an empty outcome falls back to the single best-scoring server.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HpflError, Result};
use crate::hierarchy::SelectionVector;
use crate::pfl::bound_constants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Proposed,
    Full,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Weight of importance against latency, in `[0, 1]`.
    pub rho: f64,
    pub a_max: usize,
    /// Staleness bound.
    pub s: usize,
    pub mode: SelectionMode,
    pub beta: f64,
    pub force_select_stale: bool,
}

impl SchedulerConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(HpflError::InvalidArgument(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        if self.a_max == 0 || self.a_max > k {
            return Err(HpflError::InvalidArgument(format!(
                "A_max must lie in [1, {k}], got {}",
                self.a_max
            )));
        }
        Ok(())
    }

    /// Importance weight `phi = 5 beta S^2 / A_max`.
    pub fn phi(&self) -> f64 {
        bound_constants(self.beta, self.s, self.a_max.max(1), 0, 0.0)
            .map(|(phi, _)| phi)
            .unwrap_or(0.0)
    }
}

/// Scheduler input for one edge server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub grad_norm_sq: f64,
    pub staleness: usize,
    /// Planned round latency `O_k` (s).
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub es_id: usize,
    /// `phi * grad_norm_sq`.
    pub importance: f64,
    pub latency: f64,
    pub decision: bool,
}

/// `(1 - rho) * O`, zero at `rho = 1` even for an unbounded latency.
fn latency_cost(rho: f64, latency: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        (1.0 - rho) * latency
    }
}

pub fn passes_threshold(rho: f64, phi: f64, grad_norm_sq: f64, latency: f64) -> bool {
    rho * phi * grad_norm_sq >= latency_cost(rho, latency)
}

/// `rho * phi * I - (1 - rho) * O`; positive exactly when the server is worth adding.
pub fn net_score(rho: f64, phi: f64, grad_norm_sq: f64, latency: f64) -> f64 {
    rho * phi * grad_norm_sq - latency_cost(rho, latency)
}

/// The uncapped threshold set. May be empty.
pub fn threshold_select(candidates: &[Candidate], rho: f64, phi: f64) -> SelectionVector {
    SelectionVector::new(
        candidates
            .iter()
            .map(|c| passes_threshold(rho, phi, c.grad_norm_sq, c.latency))
            .collect(),
    )
}

/// Servers that must be scheduled now so that, at `a_max` picks per round,
/// none can exceed the staleness bound. Always contains every server at
/// `staleness == s`; most stale first.
pub fn urgent_set(staleness: &[usize], s: usize, a_max: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..staleness.len()).collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(staleness[k]), k));
    // a server with slack j = s - tau must be picked within j + 1 rounds
    let mut required = 0usize;
    for j in 0..=s {
        let due = staleness.iter().filter(|&&t| t + j >= s).count();
        required = required.max(due.saturating_sub(a_max * j));
    }
    order.truncate(required);
    order
}

fn by_score_desc(candidates: &[Candidate], rho: f64, phi: f64) -> Vec<usize> {
    let score = |k: usize| net_score(rho, phi, candidates[k].grad_norm_sq, candidates[k].latency);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    order
}

/// Keep forced servers, then the best net scores, up to `a_max`.
pub fn cap_selection(
    chosen: &SelectionVector,
    forced: &[usize],
    candidates: &[Candidate],
    rho: f64,
    phi: f64,
    a_max: usize,
) -> SelectionVector {
    let mut keep: Vec<usize> = forced.iter().copied().take(a_max).collect();
    for k in by_score_desc(candidates, rho, phi) {
        if keep.len() >= a_max {
            break;
        }
        if chosen.is_selected(k) && !keep.contains(&k) {
            keep.push(k);
        }
    }
    SelectionVector::from_indices(candidates.len(), &keep)
}

/// Proposed-mode selection for one round.
pub fn schedule(candidates: &[Candidate], cfg: &SchedulerConfig, phi: f64) -> SelectionVector {
    let k = candidates.len();
    if k == 0 {
        return SelectionVector::none(0);
    }
    let mut chosen = threshold_select(candidates, cfg.rho, phi);
    let forced = if cfg.force_select_stale {
        let tau: Vec<usize> = candidates.iter().map(|c| c.staleness).collect();
        urgent_set(&tau, cfg.s, cfg.a_max)
    } else {
        Vec::new()
    };
    for &f in &forced {
        chosen.set(f, true);
    }
    let capped = cap_selection(&chosen, &forced, candidates, cfg.rho, phi, cfg.a_max);
    if capped.a_effective() > 0 {
        return capped;
    }
    SelectionVector::from_indices(k, &by_score_desc(candidates, cfg.rho, phi)[..1])
}

/// Mode-independent uniform baselines.
pub fn baseline_select<R: Rng + ?Sized>(mode: SelectionMode, k: usize, a_max: usize, rng: &mut R) -> SelectionVector {
    match mode {
        SelectionMode::Full | SelectionMode::Proposed => SelectionVector::all(k),
        SelectionMode::Random => {
            let picks = sample(rng, k, a_max.min(k)).into_vec();
            SelectionVector::from_indices(k, &picks)
        }
    }
}

/// Selection for any mode. Random mode keeps urgent servers and fills the
/// remaining slots uniformly.
pub fn select<R: Rng + ?Sized>(
    candidates: &[Candidate],
    cfg: &SchedulerConfig,
    phi: f64,
    rng: &mut R,
) -> SelectionVector {
    let k = candidates.len();
    match cfg.mode {
        SelectionMode::Proposed => schedule(candidates, cfg, phi),
        SelectionMode::Full => SelectionVector::all(k),
        SelectionMode::Random => {
            let forced = if cfg.force_select_stale {
                let tau: Vec<usize> = candidates.iter().map(|c| c.staleness).collect();
                urgent_set(&tau, cfg.s, cfg.a_max)
            } else {
                Vec::new()
            };
            let rest: Vec<usize> = (0..k).filter(|i| !forced.contains(i)).collect();
            let slots = cfg.a_max.min(k).saturating_sub(forced.len()).min(rest.len());
            let mut picks = forced;
            picks.extend(sample(rng, rest.len(), slots).into_iter().map(|i| rest[i]));
            SelectionVector::from_indices(k, &picks)
        }
    }
}

pub fn records(candidates: &[Candidate], selection: &SelectionVector, phi: f64) -> Vec<ImportanceRecord> {
    candidates
        .iter()
        .enumerate()
        .map(|(k, c)| ImportanceRecord {
            es_id: k,
            importance: phi * c.grad_norm_sq,
            latency: c.latency,
            decision: selection.is_selected(k),
        })
        .collect()
}

/// `-rho * phi * sum(pi * I) + (1 - rho) * max(pi * O)`; zero for the empty selection.
pub fn objective_value(
    selection: &SelectionVector,
    grad_norm_sq: &[f64],
    latencies: &[f64],
    rho: f64,
    phi: f64,
) -> f64 {
    let mut gain = 0.0;
    let mut worst: f64 = 0.0;
    for k in selection.indices() {
        gain += grad_norm_sq[k];
        worst = worst.max(latencies[k]);
    }
    -rho * phi * gain + latency_cost(rho, worst)
}

/// Per-server separable form `sum(pi * ((1 - rho) O - rho phi I))`.
pub fn separable_objective(
    selection: &SelectionVector,
    grad_norm_sq: &[f64],
    latencies: &[f64],
    rho: f64,
    phi: f64,
) -> f64 {
    selection
        .indices()
        .into_iter()
        .map(|k| -net_score(rho, phi, grad_norm_sq[k], latencies[k]))
        .sum()
}
