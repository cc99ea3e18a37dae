//! JSON-in, JSON-out entry points for the browser demo.
//!
//! Each exported function has a plain Rust twin ending in `_json` so the
//! logic runs and is tested natively.

use hpfl::bandwidth::{allocate, AllocationMode, AllocationProblem, AllocationResult, EdgeProblem, UeLink};
use hpfl::hierarchy::SelectionVector;
use hpfl::network::{dbm_per_hz_to_watts, tcom, uplink_rate, Payload, Radio, Topology};
use hpfl::scheduler::{cap_selection, separable_objective, threshold_select, urgent_set, Candidate};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn parse<'a, T: Deserialize<'a>>(input: &'a str) -> Result<T, String> {
    serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))
}

fn render<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeSpec {
    pub distance_m: f64,
    pub tcmp_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub distance_m: f64,
    pub ues: Vec<UeSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationInput {
    pub total_hz: f64,
    pub b_min_hz: f64,
    pub payload_bits: f64,
    #[serde(default = "default_n0")]
    pub n0_dbm_per_hz: f64,
    #[serde(default = "default_power")]
    pub p_ue: f64,
    #[serde(default = "default_power")]
    pub p_es: f64,
    #[serde(default = "default_ue_db")]
    pub ue_scale_db: f64,
    #[serde(default = "default_es_db")]
    pub es_scale_db: f64,
    pub edges: Vec<EdgeSpec>,
}

fn default_n0() -> f64 {
    -174.0
}

fn default_power() -> f64 {
    0.01
}

fn default_ue_db() -> f64 {
    -36.0
}

fn default_es_db() -> f64 {
    -40.0
}

#[derive(Debug, Serialize)]
pub struct EdgeOutcome {
    pub ue_hz: Vec<f64>,
    pub ue_finish_s: Vec<f64>,
    pub es_hz: f64,
    pub latency_s: f64,
}

#[derive(Debug, Serialize)]
pub struct AllocationOutcome {
    pub latency_s: f64,
    pub used_hz: f64,
    pub edges: Vec<EdgeOutcome>,
}

#[derive(Debug, Serialize)]
pub struct AllocationComparison {
    pub progressive: AllocationOutcome,
    pub equal: AllocationOutcome,
}

fn build_problem(input: &AllocationInput) -> AllocationProblem {
    let radio = |p: f64, scale_db: f64, d: f64| Radio {
        p,
        h: Topology::path_gain(scale_db, d),
    };
    AllocationProblem {
        edges: input
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| EdgeProblem {
                es_id: k,
                ues: e
                    .ues
                    .iter()
                    .map(|u| UeLink {
                        radio: radio(input.p_ue, input.ue_scale_db, u.distance_m),
                        tcmp: u.tcmp_s,
                    })
                    .collect(),
                uplink: radio(input.p_es, input.es_scale_db, e.distance_m),
            })
            .collect(),
        total: input.total_hz,
        n0: dbm_per_hz_to_watts(input.n0_dbm_per_hz),
        payload: Payload {
            ue_bits: input.payload_bits,
            es_bits: input.payload_bits,
        },
        b_min: input.b_min_hz,
    }
}

fn outcome(problem: &AllocationProblem, res: &AllocationResult) -> AllocationOutcome {
    let finish = res.ue_finish_times(problem);
    let latency = res.edge_latencies(problem);
    AllocationOutcome {
        latency_s: res.achieved_o,
        used_hz: res.total(),
        edges: (0..problem.edges.len())
            .map(|j| EdgeOutcome {
                ue_hz: res.b_ue[j].clone(),
                ue_finish_s: finish[j].clone(),
                es_hz: res.b_es[j],
                latency_s: latency[j],
            })
            .collect(),
    }
}

/// Progressive-fill and equal-split allocations of the same network.
pub fn allocate_json(input: &str) -> Result<String, String> {
    let input: AllocationInput = parse(input)?;
    let problem = build_problem(&input);
    let run = |mode| allocate(&problem, mode).map_err(|e| e.to_string());
    let progressive = run(AllocationMode::Progressive)?;
    let equal = run(AllocationMode::Equal)?;
    render(&AllocationComparison {
        progressive: outcome(&problem, &progressive),
        equal: outcome(&problem, &equal),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdInput {
    pub grad_norm_sq: Vec<f64>,
    pub latency_s: Vec<f64>,
    #[serde(default)]
    pub staleness: Vec<usize>,
    pub phi: f64,
    pub a_max: usize,
    /// Staleness bound; stale servers are forced in only when it is given.
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    20
}

#[derive(Debug, Serialize)]
pub struct ThresholdPoint {
    pub rho: f64,
    /// Servers passing the threshold, before the cap.
    pub passing: String,
    /// Selection after forcing stale servers and applying the cap.
    pub selected: String,
    pub objective: f64,
    pub importance: f64,
    pub max_latency_s: f64,
}

/// Selection as a function of `rho` on an even grid over `[0, 1]`.
pub fn threshold_sweep_json(input: &str) -> Result<String, String> {
    let input: ThresholdInput = parse(input)?;
    let k = input.grad_norm_sq.len();
    if k == 0 || input.latency_s.len() != k {
        return Err("grad_norm_sq and latency_s need the same non-zero length".into());
    }
    if input.a_max == 0 || input.steps == 0 {
        return Err("a_max and steps must be positive".into());
    }
    let staleness = if input.staleness.is_empty() {
        vec![0; k]
    } else if input.staleness.len() == k {
        input.staleness.clone()
    } else {
        return Err("staleness needs one entry per server".into());
    };
    let cands: Vec<Candidate> = (0..k)
        .map(|i| Candidate {
            grad_norm_sq: input.grad_norm_sq[i],
            staleness: staleness[i],
            latency: input.latency_s[i],
        })
        .collect();
    let forced = input
        .s
        .map_or_else(Vec::new, |s| urgent_set(&staleness, s, input.a_max));
    let points: Vec<ThresholdPoint> = (0..=input.steps)
        .map(|i| {
            let rho = i as f64 / input.steps as f64;
            let passing = threshold_select(&cands, rho, input.phi);
            let mut chosen = passing.clone();
            for &f in &forced {
                chosen.set(f, true);
            }
            let selected = cap_selection(&chosen, &forced, &cands, rho, input.phi, input.a_max);
            point(rho, &passing, &selected, &input)
        })
        .collect();
    render(&points)
}

fn point(rho: f64, passing: &SelectionVector, selected: &SelectionVector, input: &ThresholdInput) -> ThresholdPoint {
    let idx = selected.indices();
    ThresholdPoint {
        rho,
        passing: passing.to_string(),
        selected: selected.to_string(),
        objective: separable_objective(selected, &input.grad_norm_sq, &input.latency_s, rho, input.phi),
        importance: idx.iter().map(|&k| input.phi * input.grad_norm_sq[k]).sum(),
        max_latency_s: idx.iter().map(|&k| input.latency_s[k]).fold(0.0, f64::max),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateInput {
    pub distance_m: f64,
    pub payload_bits: f64,
    #[serde(default = "default_power")]
    pub p: f64,
    #[serde(default = "default_ue_db")]
    pub scale_db: f64,
    #[serde(default = "default_n0")]
    pub n0_dbm_per_hz: f64,
    pub max_hz: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Upload deadline to invert, in seconds.
    pub deadline_s: Option<f64>,
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Serialize)]
pub struct RateCurve {
    pub bandwidth_hz: Vec<f64>,
    pub rate_bps: Vec<f64>,
    pub upload_s: Vec<f64>,
    /// Rate reached as bandwidth grows without bound.
    pub rate_limit_bps: f64,
    pub min_upload_s: f64,
    /// Bandwidth that meets `deadline_s`, when one exists.
    pub deadline_hz: Option<f64>,
}

/// Shannon rate and upload time against bandwidth for one link.
pub fn rate_curve_json(input: &str) -> Result<String, String> {
    let input: RateInput = parse(input)?;
    if !(input.max_hz > 0.0) || input.samples < 2 {
        return Err("max_hz must be positive and samples at least 2".into());
    }
    let radio = Radio {
        p: input.p,
        h: Topology::path_gain(input.scale_db, input.distance_m),
    };
    let n0 = dbm_per_hz_to_watts(input.n0_dbm_per_hz);
    let bandwidth_hz: Vec<f64> = (1..=input.samples)
        .map(|i| input.max_hz * i as f64 / input.samples as f64)
        .collect();
    let rate_bps: Vec<f64> = bandwidth_hz
        .iter()
        .map(|&b| uplink_rate(&radio.with_bandwidth(n0, b)))
        .collect();
    let upload_s = bandwidth_hz
        .iter()
        .map(|&b| tcom(input.payload_bits, &radio.with_bandwidth(n0, b)))
        .collect();
    let deadline_hz = input
        .deadline_s
        .and_then(|t| hpfl::bandwidth::bandwidth_for_deadline(input.payload_bits, radio, n0, t).ok());
    render(&RateCurve {
        bandwidth_hz,
        rate_bps,
        upload_s,
        rate_limit_bps: radio.snr_bandwidth(n0) / std::f64::consts::LN_2,
        min_upload_s: hpfl::bandwidth::min_upload_time(input.payload_bits, radio, n0),
        deadline_hz,
    })
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn allocate_bandwidth(input: &str) -> Result<String, JsValue> {
    js(allocate_json(input))
}

#[wasm_bindgen]
pub fn threshold_sweep(input: &str) -> Result<String, JsValue> {
    js(threshold_sweep_json(input))
}

#[wasm_bindgen]
pub fn rate_curve(input: &str) -> Result<String, JsValue> {
    js(rate_curve_json(input))
}
