use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;
use super::experiment::{RoundReport, RunOutput};
use crate::error::Result;
use crate::pfl::SmoothnessConstants;

pub const CSV_COLUMNS: [&str; 8] = [
    "round",
    "loss",
    "acc",
    "latency",
    "importance",
    "A_eff",
    "runtime_us",
    "bound_rhs",
];

/// SHA-256 of the compact JSON form of the config.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialises");
    hex::encode(Sha256::digest(bytes))
}

pub fn write_csv<W: Write>(reports: &[RoundReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub rounds: usize,
    pub crate_name: String,
    pub crate_version: String,
    pub beta: f64,
    pub scheduler_phi: f64,
    pub report_phi: f64,
    pub constants: SmoothnessConstants,
    pub config: ScenarioConfig,
}

impl Manifest {
    pub fn new(cfg: &ScenarioConfig, run: &RunOutput) -> Self {
        let report_phi = crate::pfl::bound_constants(run.beta, cfg.s, cfg.a_max, cfg.k, run.constants.gamma_f_sq)
            .map(|(phi, _)| phi)
            .unwrap_or(0.0);
        Manifest {
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            rounds: run.reports.len(),
            crate_name: env!("CARGO_PKG_NAME").to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            beta: run.beta,
            scheduler_phi: run.scheduler_phi,
            report_phi,
            constants: run.constants,
            config: cfg.clone(),
        }
    }
}

/// Write `rounds.csv` and `manifest.json` into `dir`.
pub fn emit(cfg: &ScenarioConfig, run: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&run.reports, File::create(dir.join("rounds.csv"))?)?;
    let manifest = Manifest::new(cfg, run);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}
