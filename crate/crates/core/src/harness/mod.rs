//! Scenario files, experiment runs, bound audits and report emission.

pub mod audit;
pub mod config;
pub mod emit;
pub mod experiment;
pub mod stats;
pub mod sweep;

pub use audit::{audit_bound, run_audit, AuditOutput, AuditRow};
pub use config::{load_scenario, ScenarioConfig, TrainingMode};
pub use emit::{config_hash, emit, write_csv, Manifest};
pub use experiment::{run_experiment, RoundReport, RunOutput, Scenario};
pub use sweep::{parse_values, sweep, SweepPoint};
