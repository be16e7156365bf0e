//! End-to-end runs of the `spinwig` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const DECAY: &str = r#"{
    "model": {"n_sites": 1, "spin_s": 10, "dissipators": [{"kind": "decay", "gamma": 1.0}]},
    "integrator": {"t_final": 1.0, "dt": 0.01, "save_every": 0.1, "n_traj": 200, "master_seed": 11},
    "initial_state": {"theta": 3.141592653589793, "phi": 0.0}
}"#;

fn spinwig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinwig")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    spinwig(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn missing_config_exits_2_with_message() {
    let o = spinwig(&["simulate", "--config", "/nonexistent/run.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/run.json"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"model": {"n_sites": 1}}"#);
    assert_eq!(code(&run("simulate", &cfg, &dir.path().join("out"), &[])), 2);
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", DECAY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("simulate", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("simulate", &cfg, &b, &[])), 0);
    let csv = fs::read(a.join("observables.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("observables.csv")).unwrap());
    assert!(csv.starts_with(b"time,n_traj,sx,sx_err,"));

    let c = dir.path().join("c");
    assert_eq!(code(&run("simulate", &cfg, &c, &["--seed", "12"])), 0);
    assert_ne!(csv, fs::read(c.join("observables.csv")).unwrap());
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", DECAY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("simulate", &cfg, &a, &["--workers", "1"])), 0);
    assert_eq!(code(&run("simulate", &cfg, &b, &["--workers", "3"])), 0);
    assert_eq!(fs::read(a.join("observables.csv")).unwrap(), fs::read(b.join("observables.csv")).unwrap());
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", DECAY);
    let first = dir.path().join("first");
    assert_eq!(code(&run("simulate", &cfg, &first, &["--seed", "99"])), 0);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["integrator"]["master_seed"], 99);

    let again = dir.path().join("again");
    assert_eq!(code(&run("simulate", &first.join("manifest.json"), &again, &[])), 0);
    assert_eq!(
        fs::read(first.join("observables.csv")).unwrap(),
        fs::read(again.join("observables.csv")).unwrap()
    );
}

#[test]
fn diagnostics_report_run_health() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", DECAY);
    let out = dir.path().join("out");
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 0);
    let d: serde_json::Value = serde_json::from_slice(&fs::read(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(d["n_traj"], 200);
    assert_eq!(d["diverged_trajectories"], 0);
    for key in ["clamp_events", "max_spin_length_drift", "final_spin_length_drift"] {
        assert!(d.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn divergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let text = DECAY.replace("\"master_seed\": 11", "\"master_seed\": 11, \"divergence_factor\": 0.01");
    let cfg = write_config(dir.path(), "run.json", &text);
    let o = run("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn benchmark_writes_matching_schemas_and_passes() {
    let dir = TempDir::new().unwrap();
    let text = DECAY.replace("\"n_traj\": 200", "\"n_traj\": 400");
    let cfg = write_config(dir.path(), "run.json", &text);
    let out = dir.path().join("out");
    let o = run("benchmark", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let header = |name: &str| fs::read_to_string(out.join(name)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("observables.csv"), header("oracle.csv"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn benchmark_failure_exits_1() {
    let dir = TempDir::new().unwrap();
    let text = DECAY.replace(
        "\"initial_state\"",
        "\"benchmark\": {\"checks\": [{\"quantity\": \"sz\", \"max_scaled\": 1e-9}]}, \"initial_state\"",
    );
    let cfg = write_config(dir.path(), "run.json", &text);
    assert_eq!(code(&run("benchmark", &cfg, &dir.path().join("out"), &[])), 1);
}

#[test]
fn oracle_limit_exits_4() {
    let dir = TempDir::new().unwrap();
    let three_sites = DECAY.replace("\"n_sites\": 1, \"spin_s\": 10", "\"n_sites\": 3, \"spin_s\": 1");
    let cfg = write_config(dir.path(), "three.json", &three_sites);
    assert_eq!(code(&run("benchmark", &cfg, &dir.path().join("a"), &[])), 4);

    let huge = DECAY.replace("\"spin_s\": 10", "\"spin_s\": 6000");
    let cfg = write_config(dir.path(), "huge.json", &huge);
    assert_eq!(code(&run("benchmark", &cfg, &dir.path().join("b"), &[])), 4);
}

#[test]
fn empty_sweep_exits_2() {
    let dir = TempDir::new().unwrap();
    let text = DECAY.replace("\"initial_state\"", "\"sweep\": {\"name\": \"gamma_decay\", \"values\": []}, \"initial_state\"");
    let cfg = write_config(dir.path(), "run.json", &text);
    assert_eq!(code(&run("sweep", &cfg, &dir.path().join("out"), &[])), 2);
}

#[test]
fn unknown_sweep_parameter_exits_2() {
    let dir = TempDir::new().unwrap();
    let text = DECAY.replace("\"initial_state\"", "\"sweep\": {\"name\": \"omega\", \"values\": [1.0]}, \"initial_state\"");
    let cfg = write_config(dir.path(), "run.json", &text);
    assert_eq!(code(&run("sweep", &cfg, &dir.path().join("out"), &[])), 2);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = TempDir::new().unwrap();
    let text = r#"{
        "model": {"n_sites": 1, "spin_s": 5,
                  "hamiltonian": [{"kind": "transverse_drive", "omega": 0.0}],
                  "dissipators": [{"kind": "decay", "gamma": 1.0}]},
        "integrator": {"t_final": 6.0, "dt": 0.01, "save_every": 0.5, "n_traj": 100, "master_seed": 5, "n_workers": 2},
        "sweep": {"name": "omega", "values": [0.0, 0.5, 2.0], "window_start": 4.0, "window_length": 2.0, "exact": true}
    }"#;
    let cfg = write_config(dir.path(), "run.json", text);
    let out = dir.path().join("out");
    let o = run("sweep", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<String> = fs::read_to_string(out.join("sweep.csv")).unwrap().lines().map(String::from).collect();
    assert!(rows[0].starts_with("omega,n_traj,sx,sx_err"));
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("2.0,100,"));
    let exact = fs::read_to_string(out.join("sweep_exact.csv")).unwrap();
    assert_eq!(exact.lines().count(), 4);
    // Undriven decay ends in the lowest state.
    let first: Vec<&str> = exact.lines().nth(1).unwrap().split(',').collect();
    let sz: f64 = first[3].parse().unwrap();
    assert!((sz + 5.0).abs() < 1e-8, "sz = {sz}");
    for i in 0..3 {
        assert!(out.join(format!("points/point_{i:04}.json")).exists());
    }
}
