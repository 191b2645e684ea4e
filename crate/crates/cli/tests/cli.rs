use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_compositeflow"));
    c.env_remove("COMPOSITEFLOW_SEED");
    c
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SADMM: &str = r#"{
    "problem": {"n": 4, "components": 10, "regularizer": {"kind": "mcp", "weight": 0.2}, "mu": 0.1},
    "algorithm": "lp_sadmm",
    "solver": {"rho": 4.0, "mu": 0.1, "iterations": 50},
    "noise": {"mode": "gaussian", "scale": 0.5}
}"#;

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SADMM.replace("\"iterations\": 50", "\"iterations\": 50, \"colour\": 1"));
    let out = run(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = run(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_trajectory_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SADMM);
    let dir = tmp.path().join("out");
    let out = run(&["run", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("traj_seed0000.csv"));
    assert!(stdout.contains("manifest.json"));
    assert!(dir.join("traj_seed0000.csv").exists());
}

#[test]
fn seeds_flag_sets_ensemble_size() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SADMM);
    let dir = tmp.path().join("out");
    let out = run(&["ensemble", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seeds", "3", "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0));
    for i in 0..3 {
        assert!(dir.join(format!("traj_seed{i:04}.csv")).exists());
    }
    assert!(!dir.join("traj_seed0003.csv").exists());
}

#[test]
fn seed_environment_override_changes_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SADMM);
    let traj = |seed: Option<&str>, name: &str| {
        let dir = tmp.path().join(name);
        let mut c = bin();
        c.args(["run", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        if let Some(s) = seed {
            c.env("COMPOSITEFLOW_SEED", s);
        }
        assert_eq!(c.output().unwrap().status.code(), Some(0));
        fs::read(dir.join("traj_seed0000.csv")).unwrap()
    };
    let plain = traj(None, "a");
    assert_eq!(plain, traj(Some("0"), "b"));
    assert_ne!(plain, traj(Some("99"), "c"));

    let mut c = bin();
    c.args(["run", "--config", &cfg]).env("COMPOSITEFLOW_SEED", "not-a-number");
    assert_eq!(c.output().unwrap().status.code(), Some(2));
}

#[test]
fn report_on_empty_directory_has_no_analyses() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SADMM);
    let dir = tmp.path().join("empty");
    let out = run(&["report", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("status: no-analyses"));
    assert!(dir.join("summary.json").exists());
    assert!(dir.join("plot.dat").exists());
}

const NOISY_QUADRATIC: &str = r#"{
    "problem": {"n": 1, "components": 1, "regularizer": {"kind": "l1", "weight": 0.0}, "mu": 0.5, "x0": [10.0]},
    "algorithm": "sde1",
    "flow": {"lambda": 2.0, "dt": 0.01, "horizon": 1.0, "rho": 100.0},
    "ensemble": 64
}"#;

#[test]
fn noisy_energy_audit_is_inconclusive() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), NOISY_QUADRATIC);
    let dir = tmp.path().join("out");
    let out = run(&["audit-energy", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("energy.json")).unwrap()).unwrap();
    assert_eq!(json["verdict"], "inconclusive");
}

#[test]
fn small_energy_ensemble_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), NOISY_QUADRATIC);
    let out = run(&["audit-energy", "--config", &cfg, "--seeds", "8", "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn descent_audit_passes_on_flow() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &NOISY_QUADRATIC.replace("\"horizon\": 1.0", "\"horizon\": 5.0"));
    let dir = tmp.path().join("out");
    let out = run(&["audit-descent", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = run(&["report", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&report.stdout);
    assert!(stdout.contains("status: partial"));
    assert!(stdout.contains("missing: energy"));
}
