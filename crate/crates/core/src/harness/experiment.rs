use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::audit::bound_rhs;
use super::config::{ScenarioConfig, TrainingMode};
use crate::error::Result;
use crate::hierarchy::{run_round, HierarchyState, RoundConfig, UpdateRule};
use crate::loss::{Objective, ShardObjective};
use crate::network::{dbm_per_hz_to_watts, sample_channels, ComputeParams, Payload, Topology};
use crate::params::ParamVector;
use crate::pfl::{adapt, estimate_constants, meta_grad, meta_loss, ProbeConfig, SmoothnessConstants};
use crate::scheduler::SchedulerConfig;
use crate::tasks::{sample_ue_data, ClassCentres, UeData};

const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TOPOLOGY_SALT: u64 = 0x5eed_7090;
const PROBE_SALT: u64 = 0x9e37_79b9;
const SELECTION_SALT: u64 = 0xa076_1d64;

/// Data, radio topology and initial model drawn from a config's seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub data: Vec<Vec<UeData>>,
    pub topology: Topology,
    pub w0: ParamVector,
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(DATA_STREAM);
        let centres = ClassCentres::sample(&cfg.task, &mut rng);
        let data = (0..cfg.k)
            .map(|_| {
                (0..cfg.ues_per_es)
                    .map(|_| sample_ue_data(&cfg.task, &centres, cfg.heterogeneity, &mut rng))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let compute = data
            .iter()
            .map(|ues| {
                ues.iter()
                    .map(|ue| ComputeParams {
                        c: cfg.cycles_per_bit,
                        d: ue.train.size() as f64 * cfg.sample_bits,
                        delta: cfg.cpu_hz,
                    })
                    .collect()
            })
            .collect();
        let topology = Topology::sample(
            compute,
            cfg.radio,
            cfg.p_ue,
            cfg.p_es,
            dbm_per_hz_to_watts(cfg.n0_dbm_per_hz),
            cfg.seed ^ TOPOLOGY_SALT,
        );
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        init.set_stream(INIT_STREAM);
        let dim = cfg.loss.dim(cfg.task.features, cfg.task.classes);
        let w0 = ParamVector::new(
            (0..dim)
                .map(|_| cfg.init_scale * init.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        Ok(Scenario {
            cfg: cfg.clone(),
            data,
            topology,
            w0,
        })
    }

    pub fn objectives(&self) -> Vec<Vec<ShardObjective<'_>>> {
        self.data
            .iter()
            .map(|ues| {
                ues.iter()
                    .map(|ue| self.cfg.loss.bind(&ue.train, self.cfg.task.classes))
                    .collect()
            })
            .collect()
    }

    pub fn payload(&self) -> Payload {
        Payload {
            ue_bits: self.cfg.z_bits,
            es_bits: self.cfg.z_bits * self.cfg.es_payload_fraction,
        }
    }

    pub fn rule(&self) -> UpdateRule {
        match self.cfg.mode {
            TrainingMode::Hpfl => UpdateRule::Meta { alpha: self.cfg.alpha },
            TrainingMode::Hfl => UpdateRule::Plain,
        }
    }

    /// Mean test accuracy after each UE adapts `w` with one `alpha` step on its training shard.
    pub fn personalized_accuracy(&self, w: &ParamVector) -> f64 {
        let cfg = &self.cfg;
        let mut total = 0.0;
        let mut count = 0usize;
        for ue in self.data.iter().flatten() {
            let obj = cfg.loss.bind(&ue.train, cfg.task.classes);
            let theta = adapt(&obj, w, cfg.alpha);
            let hits = ue
                .test
                .samples()
                .filter(|(x, y)| cfg.loss.predict(&theta, cfg.task.features, cfg.task.classes, x) == *y)
                .count();
            total += hits as f64 / ue.test.size() as f64;
            count += 1;
        }
        total / count as f64
    }
}

pub fn as_dyn<'a>(objs: &'a [Vec<ShardObjective<'a>>]) -> Vec<Vec<&'a dyn Objective>> {
    objs.iter()
        .map(|g| g.iter().map(|o| o as &dyn Objective).collect())
        .collect()
}

/// `F(w)`: personalized loss averaged over UEs within each server, then over servers.
pub fn global_meta_loss(groups: &[Vec<&dyn Objective>], w: &ParamVector, alpha: f64) -> Result<f64> {
    let mut sum = 0.0;
    for ues in groups {
        let mut inner = 0.0;
        for obj in ues {
            inner += meta_loss(*obj, w, alpha)?;
        }
        sum += inner / ues.len() as f64;
    }
    Ok(sum / groups.len() as f64)
}

/// Gradient of [`global_meta_loss`].
pub fn global_meta_grad(groups: &[Vec<&dyn Objective>], w: &ParamVector, alpha: f64) -> Result<ParamVector> {
    let per_edge = groups
        .iter()
        .map(|ues| {
            let grads = ues
                .iter()
                .map(|o| meta_grad(*o, w, alpha))
                .collect::<Result<Vec<_>>>()?;
            ParamVector::mean(&grads)
        })
        .collect::<Result<Vec<_>>>()?;
    ParamVector::mean(&per_edge)
}

/// One row of the per-round metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    /// `F(w_{t+1})` after the round.
    pub loss: f64,
    pub acc: f64,
    pub latency: f64,
    pub importance: f64,
    #[serde(rename = "A_eff")]
    pub a_eff: usize,
    pub runtime_us: u64,
    pub bound_rhs: f64,
    #[serde(skip)]
    pub selection: String,
}

/// What the loss-change bound needs about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditStep {
    pub loss_before: f64,
    pub loss_after: f64,
    /// `||grad F(w_{t - tau_k})||^2` for each selected server.
    pub stale_grad_norms_sq: Vec<f64>,
    pub a_effective: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<RoundReport>,
    pub trajectory: Vec<AuditStep>,
    pub constants: SmoothnessConstants,
    pub scheduler_phi: f64,
    pub beta: f64,
    pub final_model: ParamVector,
}

pub fn estimate_scenario_constants(scenario: &Scenario) -> Result<SmoothnessConstants> {
    let objs = scenario.objectives();
    let groups = as_dyn(&objs);
    let probe = ProbeConfig::new(
        scenario.w0.clone(),
        scenario.cfg.probe_count,
        scenario.cfg.seed ^ PROBE_SALT,
    );
    estimate_constants(&groups, scenario.cfg.alpha, &probe)
}

/// Run `cfg.rounds` rounds and collect one report per round.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let scenario = Scenario::build(cfg)?;
    let constants = estimate_scenario_constants(&scenario)?;
    run_scenario(&scenario, constants)
}

pub fn run_scenario(scenario: &Scenario, constants: SmoothnessConstants) -> Result<RunOutput> {
    run_scenario_with(scenario, constants, |_| {})
}

/// As [`run_scenario`], calling `on_round` after every round.
pub fn run_scenario_with(
    scenario: &Scenario,
    constants: SmoothnessConstants,
    mut on_round: impl FnMut(&RoundReport),
) -> Result<RunOutput> {
    let cfg = &scenario.cfg;
    let objs = scenario.objectives();
    let groups = as_dyn(&objs);
    let scheduler = SchedulerConfig {
        rho: cfg.rho,
        a_max: cfg.a_max,
        s: cfg.s,
        mode: cfg.selection,
        beta: cfg.beta,
        force_select_stale: cfg.force_select_stale,
    };
    let scheduler_phi = cfg.scheduler_phi.unwrap_or_else(|| scheduler.phi());
    let round_cfg = RoundConfig {
        rule: scenario.rule(),
        beta: cfg.beta,
        scheduler,
        phi: scheduler_phi,
        allocation: cfg.allocation,
        total_bandwidth: cfg.bandwidth_hz,
        payload: scenario.payload(),
        b_min: cfg.b_min_hz,
        selection_seed: cfg.seed ^ SELECTION_SALT,
        timing: cfg.timing,
    };

    let mut state = HierarchyState::new(scenario.w0.clone(), &groups, round_cfg.rule, cfg.beta)?;
    let mut history = vec![scenario.w0.clone()];
    let mut grad_cache: HashMap<usize, f64> = HashMap::new();
    let mut loss_before = global_meta_loss(&groups, &state.global_model, cfg.alpha)?;
    let mut reports = Vec::with_capacity(cfg.rounds);
    let mut trajectory = Vec::with_capacity(cfg.rounds);

    for t in 0..cfg.rounds {
        let versions: Vec<usize> = state.edges.iter().map(|e| e.last_global_version).collect();
        let channels = sample_channels(&scenario.topology, t);
        let outcome = run_round(&mut state, &groups, &round_cfg, &channels)?;
        history.push(state.global_model.clone());

        let mut stale = Vec::with_capacity(outcome.a_effective);
        for k in outcome.selection.indices() {
            let v = versions[k];
            let g = match grad_cache.get(&v) {
                Some(g) => *g,
                None => {
                    let g = global_meta_grad(&groups, &history[v], cfg.alpha)?.norm_sq();
                    grad_cache.insert(v, g);
                    g
                }
            };
            stale.push(g);
        }
        let loss_after = global_meta_loss(&groups, &state.global_model, cfg.alpha)?;
        let step = AuditStep {
            loss_before,
            loss_after,
            stale_grad_norms_sq: stale,
            a_effective: outcome.a_effective,
        };
        let report = RoundReport {
            round: t + 1,
            loss: loss_after,
            acc: scenario.personalized_accuracy(&state.global_model),
            latency: outcome.latency,
            importance: outcome.captured_importance,
            a_eff: outcome.a_effective,
            runtime_us: outcome.runtime_us,
            bound_rhs: bound_rhs(&step, &constants, cfg.s, cfg.k, cfg.beta)?,
            selection: outcome.selection.to_string(),
        };
        on_round(&report);
        reports.push(report);
        trajectory.push(step);
        loss_before = loss_after;
    }
    Ok(RunOutput {
        reports,
        trajectory,
        constants,
        scheduler_phi,
        beta: cfg.beta,
        final_model: state.global_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::SelectionVector;
    use crate::scheduler::SelectionMode;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            k: 3,
            ues_per_es: 2,
            a_max: 2,
            rounds: 6,
            probe_count: 3,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn same_seed_same_reports() {
        let a = run_experiment(&small()).unwrap();
        let b = run_experiment(&small()).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.reports.len(), 6);
        for r in &a.reports {
            assert!(r.latency > 0.0 && (0.0..=1.0).contains(&r.acc));
            assert!(r.a_eff >= 1 && r.a_eff <= 2);
            assert_eq!(SelectionVector::from_bits(&r.selection).unwrap().a_effective(), r.a_eff);
        }
    }

    #[test]
    fn full_selection_uses_every_server() {
        let cfg = ScenarioConfig {
            selection: SelectionMode::Full,
            ..small()
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.reports.iter().all(|r| r.a_eff == 3));
    }

    #[test]
    fn global_gradient_is_the_mean_of_edge_means() {
        let scenario = Scenario::build(&small()).unwrap();
        let objs = scenario.objectives();
        let groups = as_dyn(&objs);
        let w = &scenario.w0;
        let g = global_meta_grad(&groups, w, 0.03).unwrap();
        let h = 1e-5;
        for i in [0, 7, 40] {
            let mut up = w.clone();
            up[i] += h;
            let mut down = w.clone();
            down[i] -= h;
            let fd = (global_meta_loss(&groups, &up, 0.03).unwrap() - global_meta_loss(&groups, &down, 0.03).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g.norm().max(1.0));
        }
    }
}
