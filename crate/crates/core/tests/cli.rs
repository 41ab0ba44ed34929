use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use safecoord::output::{ASSIGNMENT_COLUMNS, METRICS_COLUMNS, TRAJECTORY_COLUMNS};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_safecoord"));
    for (k, _) in std::env::vars() {
        if k.starts_with("SAFECOORD_") {
            c.env_remove(k);
        }
    }
    c
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

const FAR_APART: &str = "n_agents = 2\ndt = 0.05\n[sample_box]\nmin = -50.0\nmax = 50.0\n";

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bin()
        .args(["run", "--agents", "6", "--t-max", "2", "--seed", "3", "--dump-assignments", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("coordinated"), "{}", stdout(&o));

    assert_eq!(header(&out.join("trajectories.csv")), TRAJECTORY_COLUMNS.join(","));
    assert_eq!(header(&out.join("metrics.csv")), METRICS_COLUMNS.join(","));
    assert_eq!(header(&out.join("assignments.csv")), ASSIGNMENT_COLUMNS.join(","));

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["n_agents"], 6);
    assert_eq!(summary["mode"], "coordinated");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["git_describe"].is_string());
    assert_eq!(manifest["config"]["t_max"], 2.0);

    let cfg = safecoord::ScenarioConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(cfg.n_agents, 6);
}

#[test]
fn oversized_oracle_is_a_usage_error() {
    let o = bin().args(["run", "--mode", "oracle", "--agents", "8"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("oracle mode limited to N ≤ 6"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = bin().args(["run", "--config", "/nonexistent/scenario.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/scenario.toml"), "{}", stderr(&o));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "n_agents = 4\nr_s = \"wide\"\n").unwrap();
    let o = bin().arg("run").arg("--config").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = bin().args(["run", "--warp-drive"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_interacting_pair_compares_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("far.toml");
    fs::write(&path, FAR_APART).unwrap();
    let o = bin().args(["compare", "--seed", "1", "--config"]).arg(&path).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("seed 1: identical"), "{}", stdout(&o));
}

#[test]
fn seed_range_gives_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("far.toml");
    fs::write(&cfg, FAR_APART).unwrap();
    let out = dir.path().join("cmp");
    let o = bin().args(["compare", "--seeds", "1..5", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(text.lines().count(), 6, "{text}");
    for s in 1..=5 {
        assert!(out.join(format!("seed-{s}/decentralized/summary.json")).exists());
        assert!(out.join(format!("seed-{s}/coordinated/trajectories.csv")).exists());
    }
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 5);
}

#[test]
fn env_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bin()
        .env("SAFECOORD_AGENTS", "5")
        .env("SAFECOORD_MODE", "decentralized")
        .args(["run", "--t-max", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_agents"], 5);
    assert_eq!(summary["mode"], "decentralized");
}

#[test]
fn validate_passes_and_catches_planted_fault() {
    let o = bin().arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("validate: PASS"));

    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["validate", "--perturb-cost", "1000", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stderr(&o).contains("offending"), "{}", stderr(&o));
    let failure = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("failure-"))
        .expect("failure file");

    let o = bin().arg("validate").arg("--replay").arg(&failure).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("replay: FAIL"));
}
