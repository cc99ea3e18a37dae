//! Wireless latency model for the UE -> ES -> CS hierarchy.
//!
//! Uplinks follow the Shannon rate `r = b log2(1 + p h / (b N0))`; upload
//! time is `Z / r`, local computation takes `c D / delta`, and an edge
//! server's round latency is its slowest UE plus its own upload to the cloud.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Converts a noise spectral density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Transmit power (W).
    pub p: f64,
    /// Channel gain.
    pub h: f64,
    /// Noise spectral density (W/Hz).
    pub n0: f64,
    /// Allocated bandwidth (Hz).
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeParams {
    /// CPU cycles per data unit.
    pub c: f64,
    /// Local data size, in the unit `c` is expressed in.
    pub d: f64,
    /// CPU frequency (Hz).
    pub delta: f64,
}

/// Transmit power and channel gain of one uplink, before bandwidth is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radio {
    pub p: f64,
    pub h: f64,
}

impl Radio {
    pub fn with_bandwidth(self, n0: f64, b: f64) -> LinkParams {
        LinkParams {
            p: self.p,
            h: self.h,
            n0,
            b,
        }
    }

    /// `p h / N0`: the rate approaches `snr_bandwidth / ln 2` as bandwidth grows.
    pub fn snr_bandwidth(self, n0: f64) -> f64 {
        self.p * self.h / n0
    }
}

pub fn tcmp(cp: &ComputeParams) -> f64 {
    cp.c * cp.d / cp.delta
}

/// Shannon rate in bit/s. Zero bandwidth or zero gain gives a zero rate.
pub fn uplink_rate(link: &LinkParams) -> f64 {
    if link.b <= 0.0 || link.h <= 0.0 || link.p <= 0.0 {
        return 0.0;
    }
    let snr = link.p * link.h / (link.b * link.n0);
    link.b * snr.ln_1p() / std::f64::consts::LN_2
}

/// Upload time in seconds; `f64::INFINITY` when the link carries no rate.
pub fn tcom(payload_bits: f64, link: &LinkParams) -> f64 {
    let r = uplink_rate(link);
    if r > 0.0 {
        payload_bits / r
    } else {
        f64::INFINITY
    }
}

/// Propagation and power settings of the radio environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    /// Path-loss scale of UE links (dB).
    pub ue_fading_db: f64,
    /// Path-loss scale of ES -> CS links (dB).
    pub es_fading_db: f64,
    pub ue_distance_m: (f64, f64),
    pub es_distance_m: (f64, f64),
    /// Redraw the small-scale fading every round.
    pub rayleigh: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            ue_fading_db: -36.0,
            es_fading_db: -40.0,
            ue_distance_m: (2.0, 50.0),
            es_distance_m: (50.0, 200.0),
            rayleigh: true,
        }
    }
}

/// Distances and power levels, fixed for the lifetime of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub ue_distance: Vec<Vec<f64>>,
    pub es_distance: Vec<f64>,
    pub ue_compute: Vec<Vec<ComputeParams>>,
    pub p_ue: f64,
    pub p_es: f64,
    pub n0: f64,
    pub radio: RadioConfig,
    pub seed: u64,
}

impl Topology {
    /// Draw distances uniformly from the configured ranges.
    pub fn sample(
        ue_compute: Vec<Vec<ComputeParams>>,
        radio: RadioConfig,
        p_ue: f64,
        p_es: f64,
        n0: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x746f_706f);
        let ue_distance = ue_compute
            .iter()
            .map(|ues| {
                ues.iter()
                    .map(|_| rng.gen_range(radio.ue_distance_m.0..=radio.ue_distance_m.1))
                    .collect()
            })
            .collect();
        let es_distance = ue_compute
            .iter()
            .map(|_| rng.gen_range(radio.es_distance_m.0..=radio.es_distance_m.1))
            .collect();
        Topology {
            ue_distance,
            es_distance,
            ue_compute,
            p_ue,
            p_es,
            n0,
            radio,
            seed,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.es_distance.len()
    }

    /// Deterministic part of the gain: `o * d^-2`.
    pub fn path_gain(scale_db: f64, distance: f64) -> f64 {
        db_to_linear(scale_db) / (distance * distance)
    }
}

/// One round's channel realisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSnapshot {
    pub round: usize,
    pub n0: f64,
    pub ue_links: Vec<Vec<Radio>>,
    pub es_links: Vec<Radio>,
    pub ue_compute: Vec<Vec<ComputeParams>>,
}

impl ChannelSnapshot {
    pub fn edge_count(&self) -> usize {
        self.es_links.len()
    }

    pub fn ue_tcmp(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.ue_compute[k].iter().map(tcmp)
    }
}

/// Sample the channel for `round`. Gains are `o d^-2` times an exponential(1)
/// power multiplier (Rayleigh amplitude), redrawn per round.
pub fn sample_channels(topology: &Topology, round: usize) -> ChannelSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(topology.seed);
    rng.set_stream(round as u64 + 1);
    let radio = topology.radio;
    let fade = |rng: &mut ChaCha8Rng| -> f64 {
        if radio.rayleigh {
            Exp1.sample(rng)
        } else {
            1.0
        }
    };
    let ue_links = topology
        .ue_distance
        .iter()
        .map(|ds| {
            ds.iter()
                .map(|&d| Radio {
                    p: topology.p_ue,
                    h: Topology::path_gain(radio.ue_fading_db, d) * fade(&mut rng),
                })
                .collect()
        })
        .collect();
    let es_links = topology
        .es_distance
        .iter()
        .map(|&d| Radio {
            p: topology.p_es,
            h: Topology::path_gain(radio.es_fading_db, d) * fade(&mut rng),
        })
        .collect();
    ChannelSnapshot {
        round,
        n0: topology.n0,
        ue_links,
        es_links,
        ue_compute: topology.ue_compute.clone(),
    }
}

/// Payload sizes of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    /// Local model size `Z` in bits.
    pub ue_bits: f64,
    /// Edge upload size `Z_t^k <= Z` in bits.
    pub es_bits: f64,
}

/// Bandwidth assigned to every link (Hz). Unscheduled links hold zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub ue: Vec<Vec<f64>>,
    pub es: Vec<f64>,
}

impl Bandwidths {
    pub fn zeros(snapshot: &ChannelSnapshot) -> Self {
        Bandwidths {
            ue: snapshot.ue_links.iter().map(|l| vec![0.0; l.len()]).collect(),
            es: vec![0.0; snapshot.edge_count()],
        }
    }

    pub fn total(&self) -> f64 {
        self.ue.iter().flatten().sum::<f64>() + self.es.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub tcmp: Vec<Vec<f64>>,
    pub tcom_ue: Vec<Vec<f64>>,
    pub tcom_es: Vec<f64>,
    pub round_latency_per_es: Vec<f64>,
    /// Max over the selected edge servers; zero when none is selected.
    pub round_latency: f64,
}

/// `max_i (Tcmp + Tcom) + Tcom_es` for edge server `k`.
pub fn round_latency_es(k: usize, snapshot: &ChannelSnapshot, bw: &Bandwidths, payload: Payload) -> f64 {
    let n0 = snapshot.n0;
    let slowest_ue = snapshot.ue_links[k]
        .iter()
        .zip(&snapshot.ue_compute[k])
        .zip(&bw.ue[k])
        .map(|((radio, cp), &b)| tcmp(cp) + tcom(payload.ue_bits, &radio.with_bandwidth(n0, b)))
        .fold(0.0, f64::max);
    slowest_ue + tcom(payload.es_bits, &snapshot.es_links[k].with_bandwidth(n0, bw.es[k]))
}

pub fn latency_breakdown(
    snapshot: &ChannelSnapshot,
    bw: &Bandwidths,
    payload: Payload,
    selected: &[bool],
) -> LatencyBreakdown {
    let n0 = snapshot.n0;
    let tcmp_all: Vec<Vec<f64>> = snapshot
        .ue_compute
        .iter()
        .map(|cs| cs.iter().map(tcmp).collect())
        .collect();
    let tcom_ue: Vec<Vec<f64>> = snapshot
        .ue_links
        .iter()
        .zip(&bw.ue)
        .map(|(links, bs)| {
            links
                .iter()
                .zip(bs)
                .map(|(r, &b)| tcom(payload.ue_bits, &r.with_bandwidth(n0, b)))
                .collect()
        })
        .collect();
    let tcom_es: Vec<f64> = snapshot
        .es_links
        .iter()
        .zip(&bw.es)
        .map(|(r, &b)| tcom(payload.es_bits, &r.with_bandwidth(n0, b)))
        .collect();
    let per_es: Vec<f64> = (0..snapshot.edge_count())
        .map(|k| {
            tcmp_all[k]
                .iter()
                .zip(&tcom_ue[k])
                .map(|(a, b)| a + b)
                .fold(0.0, f64::max)
                + tcom_es[k]
        })
        .collect();
    let round_latency = per_es
        .iter()
        .zip(selected)
        .filter(|(_, &s)| s)
        .map(|(o, _)| *o)
        .fold(0.0, f64::max);
    LatencyBreakdown {
        tcmp: tcmp_all,
        tcom_ue,
        tcom_es,
        round_latency_per_es: per_es,
        round_latency,
    }
}
