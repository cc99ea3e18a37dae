use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandwidth::AllocationMode;
use crate::error::{HpflError, Result};
use crate::loss::LossModel;
use crate::network::RadioConfig;
use crate::scheduler::SelectionMode;
use crate::tasks::TaskFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Personalized meta-gradient steps.
    Hpfl,
    /// Plain gradient steps.
    Hfl,
}

/// Complete description of one simulated run. Every key is optional in the
/// file; absent keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of edge servers.
    pub k: usize,
    pub ues_per_es: usize,
    pub a_max: usize,
    /// Staleness bound.
    pub s: usize,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Labels per UE shard.
    pub heterogeneity: usize,
    pub bandwidth_hz: f64,
    pub n0_dbm_per_hz: f64,
    pub p_ue: f64,
    pub p_es: f64,
    pub cycles_per_bit: f64,
    pub cpu_hz: f64,
    /// Size of one training sample in bits; local data size is samples x this.
    pub sample_bits: f64,
    /// Model upload size in bits.
    pub z_bits: f64,
    /// Edge upload size as a fraction of `z_bits`.
    pub es_payload_fraction: f64,
    pub b_min_hz: f64,
    pub rounds: usize,
    pub seed: u64,
    pub mode: TrainingMode,
    pub selection: SelectionMode,
    pub allocation: AllocationMode,
    pub force_select_stale: bool,
    /// Importance weight for the scheduler; `None` uses `5 beta S^2 / A_max`.
    pub scheduler_phi: Option<f64>,
    pub probe_count: usize,
    /// Standard deviation of the initial model entries.
    pub init_scale: f64,
    /// Record wall-clock solver time in the reports.
    pub timing: bool,
    pub task: TaskFamily,
    pub loss: LossModel,
    pub radio: RadioConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            k: 5,
            ues_per_es: 4,
            a_max: 3,
            s: 2,
            rho: 0.8,
            alpha: 0.03,
            beta: 0.07,
            heterogeneity: 2,
            bandwidth_hz: 5e6,
            n0_dbm_per_hz: -174.0,
            p_ue: 0.01,
            p_es: 0.01,
            cycles_per_bit: 20.0,
            cpu_hz: 2e9,
            sample_bits: 6272.0,
            z_bits: 1e6,
            es_payload_fraction: 1.0,
            b_min_hz: 1e3,
            rounds: 50,
            seed: 0,
            mode: TrainingMode::Hpfl,
            selection: SelectionMode::Proposed,
            allocation: AllocationMode::Progressive,
            force_select_stale: true,
            scheduler_phi: None,
            probe_count: 8,
            init_scale: 0.1,
            timing: false,
            task: TaskFamily::default(),
            loss: LossModel::default(),
            radio: RadioConfig::default(),
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HpflError::config(path, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    /// Parse JSON text; blank text yields the defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HpflError::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (path, v) in [
            ("beta", self.beta),
            ("bandwidth_hz", self.bandwidth_hz),
            ("p_ue", self.p_ue),
            ("p_es", self.p_es),
            ("cycles_per_bit", self.cycles_per_bit),
            ("cpu_hz", self.cpu_hz),
            ("sample_bits", self.sample_bits),
            ("z_bits", self.z_bits),
            ("es_payload_fraction", self.es_payload_fraction),
            ("b_min_hz", self.b_min_hz),
            ("task.separation", self.task.separation),
        ] {
            positive(path, v)?;
        }
        if !self.n0_dbm_per_hz.is_finite() {
            return Err(HpflError::config("n0_dbm_per_hz", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(HpflError::config(
                "rho",
                format!("must lie in [0, 1], got {}", self.rho),
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(HpflError::config("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if self.es_payload_fraction > 1.0 {
            return Err(HpflError::config("es_payload_fraction", "must not exceed 1"));
        }
        if self.k == 0 {
            return Err(HpflError::config("k", "need at least one edge server"));
        }
        if self.ues_per_es == 0 {
            return Err(HpflError::config("ues_per_es", "need at least one UE per edge server"));
        }
        if self.a_max == 0 || self.a_max > self.k {
            return Err(HpflError::config("a_max", format!("must lie in [1, k = {}]", self.k)));
        }
        if self.selection != SelectionMode::Full && self.k > self.a_max * (self.s + 1) {
            return Err(HpflError::config(
                "s",
                format!(
                    "k = {} servers cannot all be refreshed within {} rounds at a_max = {}",
                    self.k,
                    self.s + 1,
                    self.a_max
                ),
            ));
        }
        if self.heterogeneity == 0 || self.heterogeneity > self.task.classes {
            return Err(HpflError::config(
                "heterogeneity",
                format!("must lie in [1, {}]", self.task.classes),
            ));
        }
        if self.task.features == 0 || self.task.classes < 2 {
            return Err(HpflError::config("task", "need features >= 1 and classes >= 2"));
        }
        if self.task.min_samples == 0 || self.task.min_samples > self.task.max_samples {
            return Err(HpflError::config(
                "task.min_samples",
                "need 1 <= min_samples <= max_samples",
            ));
        }
        if self.task.test_samples == 0 {
            return Err(HpflError::config("task.test_samples", "must be >= 1"));
        }
        if self.probe_count < 2 {
            return Err(HpflError::config("probe_count", "must be >= 2"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(HpflError::config("init_scale", "must be >= 0"));
        }
        if let Some(phi) = self.scheduler_phi {
            if !(phi >= 0.0 && phi.is_finite()) {
                return Err(HpflError::config("scheduler_phi", "must be >= 0"));
            }
        }
        let (lo, hi) = self.radio.ue_distance_m;
        if !(lo > 0.0 && lo <= hi) {
            return Err(HpflError::config("radio.ue_distance_m", "need 0 < min <= max"));
        }
        let (lo, hi) = self.radio.es_distance_m;
        if !(lo > 0.0 && lo <= hi) {
            return Err(HpflError::config("radio.es_distance_m", "need 0 < min <= max"));
        }
        if let LossModel::Mlp { hidden: 0, .. } = self.loss {
            return Err(HpflError::config("loss.hidden", "must be >= 1"));
        }
        Ok(())
    }

    /// Set one top-level numeric or enum field from its JSON text.
    pub fn with_param(&self, key: &str, value: &str) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        let obj = v.as_object_mut().expect("config is an object");
        if !obj.contains_key(key) {
            return Err(HpflError::config(key, "unknown parameter"));
        }
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        obj.insert(key.to_string(), parsed);
        Self::from_json(&v.to_string())
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_text_gives_defaults() {
        let cfg = ScenarioConfig::from_json("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.bandwidth_hz, 5e6);
        assert_eq!(cfg.n0_dbm_per_hz, -174.0);
        assert_eq!(cfg.p_ue, 0.01);
        assert_eq!(cfg.cycles_per_bit, 20.0);
        assert_eq!(cfg.cpu_hz, 2e9);
        assert_eq!((cfg.alpha, cfg.beta), (0.03, 0.07));
    }

    #[test]
    fn range_errors_name_the_field() {
        let err = ScenarioConfig::from_json(r#"{"rho": 1.5}"#).unwrap_err();
        assert!(matches!(err, HpflError::Config { ref path, .. } if path == "rho"));
        let err = ScenarioConfig::from_json(r#"{"task": {"classes": "ten"}}"#).unwrap_err();
        assert!(matches!(err, HpflError::Config { ref path, .. } if path == "task.classes"));
        let err = ScenarioConfig::from_json(r#"{"typo": 1}"#).unwrap_err();
        assert!(matches!(err, HpflError::Config { .. }));
        assert!(ScenarioConfig::from_json(r#"{"k": 10, "a_max": 2, "s": 3}"#).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let cfg = ScenarioConfig {
            rho: 0.55,
            selection: SelectionMode::Random,
            loss: LossModel::Mlp { hidden: 6, l2: 0.0 },
            scheduler_phi: Some(0.25),
            ..ScenarioConfig::default()
        };
        cfg.save(&path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), cfg);
    }

    #[test]
    fn single_parameter_override() {
        let cfg = ScenarioConfig::default().with_param("rho", "0.45").unwrap();
        assert_eq!(cfg.rho, 0.45);
        let cfg = cfg.with_param("selection", "full").unwrap();
        assert_eq!(cfg.selection, SelectionMode::Full);
        assert!(cfg.with_param("nope", "1").is_err());
        assert!(cfg.with_param("rho", "2").is_err());
    }
}
