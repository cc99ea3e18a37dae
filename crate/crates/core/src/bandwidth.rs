//! Min-max round-latency bandwidth allocation.
//!
//! For a fixed set of scheduled edge servers the allocator finds the
//! smallest common finishing time `O*` such that the bandwidth needed for
//! every scheduled server to finish at `O*` equals the budget `B`. Inside
//! one server all UEs finish together at `G_k`, and the split of `O*`
//! between the UE tier (`G_k`) and the server's own upload (`O* - G_k`) is
//! chosen to need the least bandwidth. The bandwidth a link needs to finish
//! an upload in time `T` has the closed form
//!
//! ```text
//! b = -Z ln2 / (T (W_{-1}(-G e^{-G}) + G)),   G = N0 Z ln2 / (T p h)
//! ```
//!
//! which is finite only for `G < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{HpflError, Result};
use crate::lambert;
use crate::network::{tcmp, tcom, Bandwidths, ChannelSnapshot, LinkParams, Payload, Radio};

/// Relative tolerance on the budget residual at the optimum.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeLink {
    pub radio: Radio,
    /// Local computation time (s).
    pub tcmp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProblem {
    pub es_id: usize,
    pub ues: Vec<UeLink>,
    pub uplink: Radio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub edges: Vec<EdgeProblem>,
    /// Total bandwidth budget (Hz).
    pub total: f64,
    pub n0: f64,
    pub payload: Payload,
    /// Floor on every scheduled link (Hz).
    pub b_min: f64,
}

impl AllocationProblem {
    /// Build the problem for the scheduled edge servers of a snapshot.
    pub fn from_snapshot(
        snapshot: &ChannelSnapshot,
        selected: &[bool],
        total: f64,
        payload: Payload,
        b_min: f64,
    ) -> Self {
        let edges = selected
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(k, _)| EdgeProblem {
                es_id: k,
                ues: snapshot.ue_links[k]
                    .iter()
                    .zip(&snapshot.ue_compute[k])
                    .map(|(radio, cp)| UeLink {
                        radio: *radio,
                        tcmp: tcmp(cp),
                    })
                    .collect(),
                uplink: snapshot.es_links[k],
            })
            .collect();
        AllocationProblem {
            edges,
            total,
            n0: snapshot.n0,
            payload,
            b_min,
        }
    }

    pub fn link_count(&self) -> usize {
        self.edges.iter().map(|e| e.ues.len() + 1).sum()
    }

    fn validate(&self) -> Result<()> {
        if !(self.total > 0.0) {
            return Err(HpflError::InvalidArgument("bandwidth budget must be positive".into()));
        }
        if self.edges.iter().any(|e| e.ues.is_empty()) {
            return Err(HpflError::InvalidArgument(
                "every scheduled edge server needs a UE".into(),
            ));
        }
        if self.b_min * self.link_count() as f64 > self.total {
            return Err(HpflError::Infeasible(format!(
                "b_min floor {} Hz on {} links exceeds the budget",
                self.b_min,
                self.link_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Per scheduled edge (problem order), per UE.
    pub b_ue: Vec<Vec<f64>>,
    pub b_es: Vec<f64>,
    /// UE-tier finishing time per scheduled edge.
    pub g: Vec<f64>,
    /// Round latency: max over scheduled edges of `G_k + Tcom_es`.
    pub achieved_o: f64,
}

impl AllocationResult {
    pub fn total(&self) -> f64 {
        self.b_ue.iter().flatten().sum::<f64>() + self.b_es.iter().sum::<f64>()
    }

    /// Scatter into a full per-link table; unscheduled servers get zero.
    pub fn to_bandwidths(&self, problem: &AllocationProblem, snapshot: &ChannelSnapshot) -> Bandwidths {
        let mut bw = Bandwidths::zeros(snapshot);
        for (j, edge) in problem.edges.iter().enumerate() {
            bw.ue[edge.es_id].clone_from(&self.b_ue[j]);
            bw.es[edge.es_id] = self.b_es[j];
        }
        bw
    }

    /// Per-UE finishing time `Tcmp + Tcom` implied by the allocation.
    pub fn ue_finish_times(&self, problem: &AllocationProblem) -> Vec<Vec<f64>> {
        problem
            .edges
            .iter()
            .zip(&self.b_ue)
            .map(|(edge, bs)| {
                edge.ues
                    .iter()
                    .zip(bs)
                    .map(|(ue, &b)| ue.tcmp + tcom(problem.payload.ue_bits, &ue.radio.with_bandwidth(problem.n0, b)))
                    .collect()
            })
            .collect()
    }

    /// Per-edge round latency `max_i finish + Tcom_es` implied by the allocation.
    pub fn edge_latencies(&self, problem: &AllocationProblem) -> Vec<f64> {
        self.ue_finish_times(problem)
            .iter()
            .zip(&problem.edges)
            .zip(&self.b_es)
            .map(|((finish, edge), &b)| {
                finish.iter().cloned().fold(0.0, f64::max)
                    + tcom(problem.payload.es_bits, &edge.uplink.with_bandwidth(problem.n0, b))
            })
            .collect()
    }
}

/// Smallest upload time any bandwidth can achieve: `Z ln2 / (p h / N0)`.
pub fn min_upload_time(payload_bits: f64, radio: Radio, n0: f64) -> f64 {
    payload_bits * std::f64::consts::LN_2 / radio.snr_bandwidth(n0)
}

/// Bandwidth at which uploading `payload_bits` takes exactly `t` seconds.
///
/// Uses the Lambert-W closed form and checks it by residual; a bisection on
/// the monotone rate takes over if the check fails.
pub fn bandwidth_for_deadline(payload_bits: f64, radio: Radio, n0: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !(radio.p * radio.h > 0.0) {
        return Err(HpflError::Infeasible(format!("no bandwidth reaches upload time {t} s")));
    }
    if payload_bits == 0.0 {
        return Ok(0.0);
    }
    let gamma = min_upload_time(payload_bits, radio, n0) / t;
    if !(gamma < 1.0) {
        return Err(HpflError::Infeasible(format!(
            "upload time {t} s is below the infinite-bandwidth limit {} s",
            t * gamma
        )));
    }
    let closed = lambert::wm1(-gamma * (-gamma).exp())
        .map(|w| -payload_bits * std::f64::consts::LN_2 / (t * (w + gamma)))
        .filter(|b| b.is_finite() && *b > 0.0);
    if let Some(b) = closed {
        let achieved = tcom(payload_bits, &radio.with_bandwidth(n0, b));
        if ((achieved - t) / t).abs() <= 1e-9 {
            return Ok(b);
        }
    }
    Ok(bisect_bandwidth(payload_bits, radio, n0, t))
}

/// Reference inversion of `Z / r(b) = t` by geometric bisection.
pub fn bisect_bandwidth(payload_bits: f64, radio: Radio, n0: f64, t: f64) -> f64 {
    let target = payload_bits / t;
    let rate = |b: f64| crate::network::uplink_rate(&radio.with_bandwidth(n0, b));
    let (mut lo, mut hi) = (1e-12_f64, 1.0_f64);
    while rate(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `db/dT` of the deadline inversion at bandwidth `b` (negative).
fn deadline_slope(payload_bits: f64, radio: Radio, n0: f64, t: f64, b: f64) -> f64 {
    let s = radio.snr_bandwidth(n0);
    let dr = ((s / b).ln_1p() - s / (b + s)) / std::f64::consts::LN_2;
    -payload_bits / (t * t * dr)
}

/// Bandwidth (with floor) and its slope for one link and deadline.
fn link_need(payload_bits: f64, radio: Radio, n0: f64, t: f64, b_min: f64) -> Result<(f64, f64)> {
    let b = bandwidth_for_deadline(payload_bits, radio, n0, t)?;
    if b < b_min {
        Ok((b_min, 0.0))
    } else {
        Ok((b, deadline_slope(payload_bits, radio, n0, t, b)))
    }
}

/// Per-UE bandwidths making every UE of `edge` finish exactly at `g_target`.
pub fn solve_ue_bandwidth(edge: &EdgeProblem, g_target: f64, payload_bits: f64, n0: f64) -> Result<Vec<f64>> {
    edge.ues
        .iter()
        .enumerate()
        .map(|(i, ue)| {
            if g_target <= ue.tcmp {
                return Err(HpflError::Infeasible(format!(
                    "UE {i} of edge server {} computes for {} s, beyond the target {g_target} s",
                    edge.es_id, ue.tcmp
                )));
            }
            bandwidth_for_deadline(payload_bits, ue.radio, n0, g_target - ue.tcmp).map_err(|e| match e {
                HpflError::Infeasible(msg) => {
                    HpflError::Infeasible(format!("UE {i} of edge server {}: {msg}", edge.es_id))
                }
                other => other,
            })
        })
        .collect()
}

struct EdgePlan {
    g: f64,
    b_ue: Vec<f64>,
    b_es: f64,
}

impl EdgePlan {
    fn total(&self) -> f64 {
        self.b_ue.iter().sum::<f64>() + self.b_es
    }
}

fn edge_bounds(edge: &EdgeProblem, problem: &AllocationProblem) -> (f64, f64) {
    let g_lo = edge
        .ues
        .iter()
        .map(|ue| ue.tcmp + min_upload_time(problem.payload.ue_bits, ue.radio, problem.n0))
        .fold(0.0, f64::max);
    let es_lo = min_upload_time(problem.payload.es_bits, edge.uplink, problem.n0);
    (g_lo, es_lo)
}

/// Least total bandwidth letting `edge` finish by `o`, over the tier split.
fn plan_edge(edge: &EdgeProblem, problem: &AllocationProblem, o: f64) -> Result<EdgePlan> {
    let (g_lo, es_lo) = edge_bounds(edge, problem);
    let g_hi = o - es_lo;
    if !(g_hi > g_lo) {
        return Err(HpflError::Infeasible(format!(
            "edge server {} cannot finish by {o} s",
            edge.es_id
        )));
    }
    let p = &problem.payload;
    // d(need)/dG is increasing in G; bisect for its root.
    let slope = |g: f64| -> Result<f64> {
        let mut s = 0.0;
        for ue in &edge.ues {
            s += link_need(p.ue_bits, ue.radio, problem.n0, g - ue.tcmp, problem.b_min)?.1;
        }
        s -= link_need(p.es_bits, edge.uplink, problem.n0, o - g, problem.b_min)?.1;
        Ok(s)
    };
    let (mut lo, mut hi) = (g_lo, g_hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g = 0.5 * (lo + hi);
    let b_ue = edge
        .ues
        .iter()
        .map(|ue| link_need(p.ue_bits, ue.radio, problem.n0, g - ue.tcmp, problem.b_min).map(|x| x.0))
        .collect::<Result<Vec<_>>>()?;
    let b_es = link_need(p.es_bits, edge.uplink, problem.n0, o - g, problem.b_min)?.0;
    Ok(EdgePlan { g, b_ue, b_es })
}

fn plan_all(problem: &AllocationProblem, o: f64) -> Result<(f64, Vec<EdgePlan>)> {
    let plans = problem
        .edges
        .iter()
        .map(|e| plan_edge(e, problem, o))
        .collect::<Result<Vec<_>>>()?;
    Ok((plans.iter().map(EdgePlan::total).sum(), plans))
}

/// Min-max allocation: every scheduled edge server finishes at the same
/// time `O*` and the budget is used up.
pub fn progressive_fill(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    if problem.edges.is_empty() {
        return Ok(AllocationResult {
            b_ue: vec![],
            b_es: vec![],
            g: vec![],
            achieved_o: 0.0,
        });
    }
    let o_floor = problem
        .edges
        .iter()
        .map(|e| {
            let (g_lo, es_lo) = edge_bounds(e, problem);
            g_lo + es_lo
        })
        .fold(0.0, f64::max);
    // the equal split is feasible, so its latency brackets O* from above
    let mut hi = equal_split(problem)?.achieved_o;
    if !hi.is_finite() {
        return Err(HpflError::Infeasible("equal split yields an unbounded latency".into()));
    }
    let (mut need_hi, mut plans_hi) = plan_all(problem, hi)?;
    let budget = problem.total;
    let mut lo = o_floor;
    let mut need_lo = f64::INFINITY;
    let mut side = 0i8;

    for _ in 0..200 {
        if budget - need_hi <= BUDGET_TOL * budget {
            break;
        }
        // Illinois step when both ends are finite, bisection otherwise
        let mut o = if need_lo.is_finite() {
            let (flo, fhi) = (need_lo - budget, need_hi - budget);
            (lo * fhi - hi * flo) / (fhi - flo)
        } else {
            0.5 * (lo + hi)
        };
        if !(o > lo && o < hi) {
            o = 0.5 * (lo + hi);
        }
        if o <= lo || o >= hi {
            break;
        }
        match plan_all(problem, o) {
            Ok((need, plans)) if need.is_finite() => {
                if need > budget {
                    lo = o;
                    need_lo = need;
                    if side == -1 {
                        need_hi = budget + 0.5 * (need_hi - budget);
                    }
                    side = -1;
                } else {
                    hi = o;
                    need_hi = need;
                    plans_hi = plans;
                    if side == 1 && need_lo.is_finite() {
                        need_lo = budget + 0.5 * (need_lo - budget);
                    }
                    side = 1;
                }
            }
            Ok(_) | Err(HpflError::Infeasible(_)) => {
                lo = o;
                need_lo = f64::INFINITY;
            }
            Err(e) => return Err(e),
        }
    }
    // recompute the exact need at `hi` after Illinois rescaling
    let total: f64 = plans_hi.iter().map(EdgePlan::total).sum();
    if total > budget * (1.0 + BUDGET_TOL) {
        return Err(HpflError::Infeasible(
            "bandwidth search failed to meet the budget".into(),
        ));
    }
    Ok(AllocationResult {
        g: plans_hi.iter().map(|p| p.g).collect(),
        b_ue: plans_hi.iter().map(|p| p.b_ue.clone()).collect(),
        b_es: plans_hi.iter().map(|p| p.b_es).collect(),
        achieved_o: hi,
    })
}

/// Every scheduled link gets `B / links`: UEs of one server share equally
/// and all server uplinks get the same share.
pub fn equal_split(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let links = problem.link_count();
    if links == 0 {
        return Ok(AllocationResult {
            b_ue: vec![],
            b_es: vec![],
            g: vec![],
            achieved_o: 0.0,
        });
    }
    let share = problem.total / links as f64;
    let mut result = AllocationResult {
        b_ue: problem.edges.iter().map(|e| vec![share; e.ues.len()]).collect(),
        b_es: vec![share; problem.edges.len()],
        g: vec![],
        achieved_o: 0.0,
    };
    result.g = result
        .ue_finish_times(problem)
        .iter()
        .map(|f| f.iter().cloned().fold(0.0, f64::max))
        .collect();
    result.achieved_o = result.edge_latencies(problem).into_iter().fold(0.0, f64::max);
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    /// Min-max common finishing time.
    Progressive,
    /// Uniform share per scheduled link.
    Equal,
}

pub fn allocate(problem: &AllocationProblem, mode: AllocationMode) -> Result<AllocationResult> {
    match mode {
        AllocationMode::Progressive => progressive_fill(problem),
        AllocationMode::Equal => equal_split(problem),
    }
}

/// Uplink parameters for one link of the result (test and demo helper).
pub fn link_params(radio: Radio, n0: f64, b: f64) -> LinkParams {
    radio.with_bandwidth(n0, b)
}
