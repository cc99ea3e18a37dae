//! UE / edge / cloud state and the per-round training loop.
//!
//! An edge server trains from the last global model it received. Its UE
//! meta-gradients are computed once per synchronisation and reused until the
//! server is selected again, so a selected server contributes gradients
//! evaluated at `w_{t - tau}`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandwidth::{allocate, AllocationMode, AllocationProblem};
use crate::error::{HpflError, Result};
use crate::loss::Objective;
use crate::network::{ChannelSnapshot, Payload};
use crate::params::ParamVector;
use crate::pfl::local_update_with_grad;
use crate::scheduler::{records, select, Candidate, ImportanceRecord, SchedulerConfig, SelectionMode};

/// Binary selection of edge servers for one round.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectionVector {
    pi: Vec<bool>,
}

impl SelectionVector {
    pub fn new(pi: Vec<bool>) -> Self {
        SelectionVector { pi }
    }

    pub fn none(k: usize) -> Self {
        SelectionVector { pi: vec![false; k] }
    }

    pub fn all(k: usize) -> Self {
        SelectionVector { pi: vec![true; k] }
    }

    pub fn from_indices(k: usize, indices: &[usize]) -> Self {
        let mut pi = vec![false; k];
        for &i in indices {
            pi[i] = true;
        }
        SelectionVector { pi }
    }

    /// Parse a `0`/`1` pattern such as `"1100"`.
    pub fn from_bits(bits: &str) -> Result<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(HpflError::InvalidArgument(format!("bad selection bit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(SelectionVector::new)
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn a_effective(&self) -> usize {
        self.pi.iter().filter(|&&p| p).count()
    }

    pub fn is_selected(&self, k: usize) -> bool {
        self.pi[k]
    }

    pub fn set(&mut self, k: usize, value: bool) {
        self.pi[k] = value;
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.pi.len()).filter(|&k| self.pi[k]).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.pi
    }

    pub fn union(&self, other: &SelectionVector) -> SelectionVector {
        SelectionVector::new(self.pi.iter().zip(&other.pi).map(|(a, b)| *a || *b).collect())
    }
}

impl std::fmt::Display for SelectionVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &p in &self.pi {
            f.write_str(if p { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Gradient used by UEs for their single local step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRule {
    /// Personalized meta-gradient with adaptation step `alpha`.
    Meta { alpha: f64 },
    /// Plain gradient (non-personalized hierarchical FL).
    Plain,
}

impl UpdateRule {
    pub fn step(&self, obj: &dyn Objective, w: &ParamVector, beta: f64) -> Result<(ParamVector, ParamVector)> {
        match *self {
            UpdateRule::Meta { alpha } => local_update_with_grad(obj, w, alpha, beta),
            UpdateRule::Plain => local_update_with_grad(obj, w, 0.0, beta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    pub es_id: usize,
    pub ue_models: Vec<ParamVector>,
    pub edge_model: ParamVector,
    pub cached_meta_grads: Vec<ParamVector>,
    pub last_global_version: usize,
    pub staleness: usize,
    /// `||mean cached meta-gradient||^2`.
    pub grad_norm_sq: f64,
}

impl EdgeState {
    /// Receive `base` (global version `version`) and train every UE from it.
    pub fn synced(
        es_id: usize,
        base: &ParamVector,
        version: usize,
        ues: &[&dyn Objective],
        rule: UpdateRule,
        beta: f64,
    ) -> Result<Self> {
        let mut ue_models = Vec::with_capacity(ues.len());
        let mut cached_meta_grads = Vec::with_capacity(ues.len());
        for (i, obj) in ues.iter().enumerate() {
            let (w, g) = rule.step(*obj, base, beta).map_err(|e| e.at(version, (es_id, i)))?;
            ue_models.push(w);
            cached_meta_grads.push(g);
        }
        let edge_model = edge_aggregate(&ue_models)?;
        let grad_norm_sq = ParamVector::mean(&cached_meta_grads)?.norm_sq();
        Ok(EdgeState {
            es_id,
            ue_models,
            edge_model,
            cached_meta_grads,
            last_global_version: version,
            staleness: 0,
            grad_norm_sq,
        })
    }

    pub fn mean_meta_grad(&self) -> Result<ParamVector> {
        if self.cached_meta_grads.is_empty() {
            return Err(HpflError::MissingGradient { es: self.es_id });
        }
        ParamVector::mean(&self.cached_meta_grads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyState {
    pub global_model: ParamVector,
    pub edges: Vec<EdgeState>,
    pub round: usize,
    pub selected_history: Vec<SelectionVector>,
}

impl HierarchyState {
    /// Every edge server starts synchronised to `w0`.
    pub fn new(w0: ParamVector, groups: &[Vec<&dyn Objective>], rule: UpdateRule, beta: f64) -> Result<Self> {
        let edges = groups
            .iter()
            .enumerate()
            .map(|(k, ues)| EdgeState::synced(k, &w0, 0, ues, rule, beta))
            .collect::<Result<Vec<_>>>()?;
        Ok(HierarchyState {
            global_model: w0,
            edges,
            round: 0,
            selected_history: Vec::new(),
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn staleness(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.staleness).collect()
    }

    /// SHA-256 over the round, staleness counters and the exact bits of the
    /// global and edge models.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.round as u64).to_le_bytes());
        for v in self.global_model.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        for e in &self.edges {
            h.update((e.staleness as u64).to_le_bytes());
            for v in e.edge_model.as_slice() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Mean of the UE models of one edge server, summed left to right.
pub fn edge_aggregate(ue_models: &[ParamVector]) -> Result<ParamVector> {
    ParamVector::mean(ue_models)
}

/// `w_t - (beta / A) * sum over selected of the mean cached meta-gradient`.
pub fn global_update(state: &HierarchyState, selection: &SelectionVector, beta: f64) -> Result<ParamVector> {
    let a = selection.a_effective();
    if a == 0 {
        return Err(HpflError::InvalidArgument(
            "global update needs at least one selected edge server".into(),
        ));
    }
    if selection.len() != state.edge_count() {
        return Err(HpflError::DimensionMismatch {
            expected: state.edge_count(),
            got: selection.len(),
        });
    }
    let mut sum = ParamVector::zeros(state.global_model.dim());
    for k in selection.indices() {
        let g = state.edges[k].mean_meta_grad()?;
        if g.dim() != sum.dim() {
            return Err(HpflError::DimensionMismatch {
                expected: sum.dim(),
                got: g.dim(),
            });
        }
        sum.axpy(1.0, &g);
    }
    let next = state.global_model.add_scaled(-beta / a as f64, &sum);
    next.check_finite("global model")?;
    Ok(next)
}

/// Reset the selected servers' counters and age the rest by one round.
pub fn advance_staleness(state: &mut HierarchyState, selection: &SelectionVector, bound: usize) -> Result<()> {
    for (k, edge) in state.edges.iter().enumerate() {
        if !selection.is_selected(k) && edge.staleness + 1 > bound {
            return Err(HpflError::StalenessOverflow { es: k, bound });
        }
    }
    let next_version = state.round + 1;
    for (k, edge) in state.edges.iter_mut().enumerate() {
        if selection.is_selected(k) {
            edge.staleness = 0;
            edge.last_global_version = next_version;
        } else {
            edge.staleness += 1;
        }
    }
    Ok(())
}

/// Per-round settings shared by every round of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub rule: UpdateRule,
    pub beta: f64,
    pub scheduler: SchedulerConfig,
    /// Importance weight used by the scheduler.
    pub phi: f64,
    pub allocation: AllocationMode,
    pub total_bandwidth: f64,
    pub payload: Payload,
    pub b_min: f64,
    pub selection_seed: u64,
    /// Record wall-clock solver time; off keeps reports reproducible.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: usize,
    pub selection: SelectionVector,
    pub records: Vec<ImportanceRecord>,
    /// Realised round latency of the selected servers (s).
    pub latency: f64,
    /// `sum over selected of phi * grad_norm_sq`.
    pub captured_importance: f64,
    pub a_effective: usize,
    pub runtime_us: u64,
}

fn problem_for(cfg: &RoundConfig, channels: &ChannelSnapshot, selection: &SelectionVector) -> AllocationProblem {
    AllocationProblem::from_snapshot(
        channels,
        selection.as_slice(),
        cfg.total_bandwidth,
        cfg.payload,
        cfg.b_min,
    )
}

/// Latency each server would see under the previous selection's allocation;
/// servers outside it are priced by joining that selection.
fn planned_latencies(cfg: &RoundConfig, channels: &ChannelSnapshot, previous: &SelectionVector) -> Result<Vec<f64>> {
    let k = channels.edge_count();
    let mut out = vec![f64::INFINITY; k];
    let problem = problem_for(cfg, channels, previous);
    let base = allocate(&problem, cfg.allocation)?;
    for (j, lat) in base.edge_latencies(&problem).into_iter().enumerate() {
        out[problem.edges[j].es_id] = lat;
    }
    for (es, slot) in out.iter_mut().enumerate() {
        if previous.is_selected(es) {
            continue;
        }
        let joined = previous.union(&SelectionVector::from_indices(k, &[es]));
        let problem = problem_for(cfg, channels, &joined);
        match allocate(&problem, cfg.allocation) {
            Ok(res) => {
                let j = problem
                    .edges
                    .iter()
                    .position(|e| e.es_id == es)
                    .expect("joined server present");
                *slot = res.edge_latencies(&problem)[j];
            }
            Err(HpflError::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One communication round: plan latencies on the previous selection,
/// select, allocate for the new selection, aggregate, update the global
/// model, age and resynchronise.
pub fn run_round(
    state: &mut HierarchyState,
    groups: &[Vec<&dyn Objective>],
    cfg: &RoundConfig,
    channels: &ChannelSnapshot,
) -> Result<RoundOutcome> {
    run_round_with(state, groups, cfg, channels, None)
}

/// [`run_round`] with an optional externally imposed selection.
pub fn run_round_with(
    state: &mut HierarchyState,
    groups: &[Vec<&dyn Objective>],
    cfg: &RoundConfig,
    channels: &ChannelSnapshot,
    imposed: Option<&SelectionVector>,
) -> Result<RoundOutcome> {
    let k = state.edge_count();
    if groups.len() != k || channels.edge_count() != k {
        return Err(HpflError::DimensionMismatch {
            expected: k,
            got: groups.len().min(channels.edge_count()),
        });
    }
    let started = cfg.timing.then(Instant::now);
    let previous = state
        .selected_history
        .last()
        .cloned()
        .unwrap_or_else(|| SelectionVector::all(k));
    let latencies = if imposed.is_none() && cfg.scheduler.mode == SelectionMode::Proposed {
        planned_latencies(cfg, channels, &previous)?
    } else {
        vec![0.0; k]
    };
    let candidates: Vec<Candidate> = state
        .edges
        .iter()
        .zip(&latencies)
        .map(|(e, &latency)| Candidate {
            grad_norm_sq: e.grad_norm_sq,
            staleness: e.staleness,
            latency,
        })
        .collect();
    let selection = match imposed {
        Some(sel) => sel.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.selection_seed);
            rng.set_stream(state.round as u64);
            select(&candidates, &cfg.scheduler, cfg.phi, &mut rng)
        }
    };
    let problem = problem_for(cfg, channels, &selection);
    let allocation = allocate(&problem, cfg.allocation)?;
    let latency = allocation.edge_latencies(&problem).into_iter().fold(0.0, f64::max);
    let runtime_us = started.map_or(0, |s| s.elapsed().as_micros() as u64);

    for edge in state.edges.iter_mut() {
        edge.edge_model = edge_aggregate(&edge.ue_models)?;
    }
    let next_global = global_update(state, &selection, cfg.beta)?;
    advance_staleness(state, &selection, cfg.scheduler.s)?;
    state.global_model = next_global;
    state.round += 1;
    for k in selection.indices() {
        state.edges[k] = EdgeState::synced(k, &state.global_model, state.round, &groups[k], cfg.rule, cfg.beta)?;
    }
    state.selected_history.push(selection.clone());

    let captured_importance = selection
        .indices()
        .into_iter()
        .map(|k| cfg.phi * candidates[k].grad_norm_sq)
        .sum();
    Ok(RoundOutcome {
        round: state.round - 1,
        records: records(&candidates, &selection, cfg.phi),
        a_effective: selection.a_effective(),
        selection,
        latency,
        captured_importance,
        runtime_us,
    })
}
