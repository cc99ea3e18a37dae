use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hpfl::bandwidth::AllocationMode;
use hpfl::harness::{self, load_scenario, ScenarioConfig, TrainingMode};
use hpfl::scheduler::SelectionMode;
use hpfl::HpflError;

#[derive(Parser)]
#[command(
    name = "hpfl",
    version,
    about = "Hierarchical personalized federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write rounds.csv and manifest.json.
    Run(RunArgs),
    /// Run with beta = 1 / L_F and check the per-round loss-change bound.
    Audit(AuditArgs),
    /// Repeat a run over a range of values of one parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TrainingMode>,
    #[arg(long, value_parser = parse_selection)]
    selection: Option<SelectionMode>,
    #[arg(long, value_parser = parse_allocation)]
    allocation: Option<AllocationMode>,
    #[arg(long)]
    rho: Option<f64>,
    /// Record wall-clock scheduler and allocator time.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    param: String,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    values: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

fn parse_mode(s: &str) -> Result<TrainingMode, String> {
    match s {
        "hpfl" => Ok(TrainingMode::Hpfl),
        "hfl" => Ok(TrainingMode::Hfl),
        _ => Err(format!("expected hpfl or hfl, got {s}")),
    }
}

fn parse_selection(s: &str) -> Result<SelectionMode, String> {
    match s {
        "proposed" => Ok(SelectionMode::Proposed),
        "full" => Ok(SelectionMode::Full),
        "random" => Ok(SelectionMode::Random),
        _ => Err(format!("expected proposed, full or random, got {s}")),
    }
}

fn parse_allocation(s: &str) -> Result<AllocationMode, String> {
    match s {
        "progressive" => Ok(AllocationMode::Progressive),
        "equal" => Ok(AllocationMode::Equal),
        _ => Err(format!("expected progressive or equal, got {s}")),
    }
}

fn apply(mut cfg: ScenarioConfig, o: &Overrides) -> Result<ScenarioConfig, HpflError> {
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = o.mode {
        cfg.mode = v;
    }
    if let Some(v) = o.selection {
        cfg.selection = v;
    }
    if let Some(v) = o.allocation {
        cfg.allocation = v;
    }
    if let Some(v) = o.rho {
        cfg.rho = v;
    }
    cfg.timing |= o.timing;
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: Option<&Path>, o: &Overrides) -> Result<ScenarioConfig, HpflError> {
    let cfg = match path {
        Some(p) => load_scenario(p).map_err(|e| match e {
            HpflError::Io(io) => HpflError::config(p.display().to_string(), io.to_string()),
            other => other,
        })?,
        None => ScenarioConfig::default(),
    };
    apply(cfg, o)
}

fn run(args: &RunArgs) -> Result<(), HpflError> {
    let cfg = load(Some(&args.config), &args.overrides)?;
    let out = harness::run_experiment(&cfg)?;
    harness::emit(&cfg, &out, &args.out)?;
    if let Some(last) = out.reports.last() {
        println!(
            "{} rounds: loss {:.6}, accuracy {:.4}, mean latency {:.4} s",
            out.reports.len(),
            last.loss,
            last.acc,
            out.reports.iter().map(|r| r.latency).sum::<f64>() / out.reports.len() as f64
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn audit(args: &AuditArgs) -> Result<(), HpflError> {
    let cfg = load(Some(&args.config), &args.overrides)?;
    let out = harness::run_audit(&cfg)?;
    let audited = ScenarioConfig {
        beta: out.run.beta,
        ..cfg
    };
    harness::emit(&audited, &out.run, &args.out)?;
    let mut w = csv::Writer::from_path(args.out.join("audit.csv"))?;
    for row in &out.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    println!(
        "beta = 1/L_F = {:.6}; bound held in {}/{} rounds",
        out.run.beta,
        out.rows.len() - out.violations(),
        out.rows.len()
    );
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), HpflError> {
    let cfg = load(args.config.as_deref(), &args.overrides)?;
    let values = harness::parse_values(&args.values)?;
    let points = harness::sweep(&cfg, &args.param, &values)?;
    std::fs::create_dir_all(&args.out)?;
    let mut w = csv::Writer::from_path(args.out.join("sweep.csv"))?;
    for p in &points {
        w.serialize(p)?;
        println!(
            "{}={}: latency {:.4} s, importance {:.4}, A_eff {:.2}, loss {:.5}",
            args.param, p.value, p.mean_latency, p.mean_importance, p.mean_a_eff, p.final_loss
        );
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Audit(a) => audit(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HpflError::Config { .. } => 2,
                HpflError::Infeasible(_) => 3,
                _ => 1,
            })
        }
    }
}
