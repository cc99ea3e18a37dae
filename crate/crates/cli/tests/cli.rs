use std::path::Path;
use std::process::{Command, Output};

fn hpfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpfl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn small(dir: &Path) -> String {
    write_config(
        dir,
        "small.json",
        r#"{"k": 3, "ues_per_es": 2, "a_max": 2, "rounds": 4, "probe_count": 3}"#,
    )
}

fn csv_rows(path: &Path) -> (Vec<String>, usize) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    (header, reader.records().count())
}

#[test]
fn run_writes_rounds_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = dir.path().join("out");
    let res = hpfl(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv_rows(&out.join("rounds.csv"));
    assert_eq!(
        header,
        [
            "round",
            "loss",
            "acc",
            "latency",
            "importance",
            "A_eff",
            "runtime_us",
            "bound_rhs"
        ]
    );
    assert_eq!(rows, 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["rounds"], 4);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["k"], 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert!(hpfl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success());
        files.push(std::fs::read(out.join("rounds.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn audit_writes_a_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = dir.path().join("audit");
    let res = hpfl(&["audit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv_rows(&out.join("audit.csv"));
    assert_eq!(header, ["round", "lhs", "rhs", "holds"]);
    assert_eq!(rows, 4);
    assert!(String::from_utf8_lossy(&res.stdout).contains("4/4"));
    assert!(out.join("rounds.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = dir.path().join("sweep");
    let res = hpfl(&[
        "sweep",
        "--config",
        &cfg,
        "--param",
        "rho",
        "--values",
        "0.5:0.7:0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv_rows(&out.join("sweep.csv"));
    assert_eq!(header[0], "value");
    assert_eq!(rows, 3);
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"rho": 1.5}"#);
    let res = hpfl(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("rho"));

    let unknown = write_config(dir.path(), "unknown.json", r#"{"radio": {"bogus": 1}}"#);
    let res = hpfl(&["run", "--config", &unknown, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("radio"));

    let res = hpfl(&["run", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn infeasible_bandwidth_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tight.json", r#"{"bandwidth_hz": 1e4, "rounds": 2}"#);
    let res = hpfl(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("infeasible"));
}
