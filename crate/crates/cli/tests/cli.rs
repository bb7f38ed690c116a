//! End-to-end runs of the compiled binary: flag handling, file layout of
//! each subcommand, exit codes, and byte-level determinism of the exports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stagewise"))
}

fn small_instance() -> &'static str {
    r#"
    d = 2
    T = 50
    theta_star = [0.5, 0.4]
    R = 0.1
    S = 1.0
    L = 1.0
    lambda = 1.0
    delta = 0.1
    alpha = 0.2
    gate_scale = 0.0

    [baseline]
    actions = [[0.6, 0.5]]

    [bounds]
    r_l = 0.4
    r_h = 0.5
    kappa_l = 0.0
    kappa_h = 0.25

    [action_set]
    kind = "ball-grid"
    n_grid = 64
    n_shell = 8
    "#
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("instance.toml");
    fs::write(&path, small_instance()).unwrap();
    path
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn run_writes_rounds_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--policy", "sclts", "--T", "40", "--seeds", "3", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);

    let csv = out_dir.join("rounds.csv");
    let json = out_dir.join("rounds_summary.json");
    assert_eq!(line_count(&csv), 1 + 3 * 40, "header plus one row per (run, round)");

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    for key in [
        "config_echo",
        "n_runs",
        "T",
        "mean_regret",
        "std_regret",
        "mean_ntc",
        "violation_run_fraction",
        "ellipsoid_failure_fraction",
        "bounds",
    ] {
        assert!(summary.get(key).is_some(), "summary is missing {key}");
    }
    assert_eq!(summary["n_runs"], 3);
    assert_eq!(summary["T"], 40);
    assert_eq!(summary["mean_regret"].as_array().unwrap().len(), 40);
    assert_eq!(summary["config_echo"]["alpha"], 0.2);
    // A constrained policy gets a populated bound block.
    assert!(summary["bounds"]["ntc_bound"]["total"].as_f64().unwrap() > 0.0);

    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("3 runs x 40 rounds"), "stdout was: {text}");
}

#[test]
fn run_falls_back_to_the_instance_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--policy", "lucb", "--seeds", "2", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);
    // Instance file says T = 50; an unconstrained policy reports no bounds.
    assert_eq!(line_count(&out_dir.join("rounds.csv")), 1 + 2 * 50);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("rounds_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["T"], 50);
    assert_eq!(summary["bounds"], serde_json::json!({}));
}

#[test]
fn format_flag_narrows_the_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());

    let csv_dir = dir.path().join("csv");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--policy", "sclts", "--T", "10", "--seeds", "1", "--format", "csv", "--out"])
        .arg(&csv_dir)
        .output()
        .unwrap();
    assert_success(&out);
    assert!(csv_dir.join("rounds.csv").exists());
    assert!(!csv_dir.join("rounds_summary.json").exists());

    let json_dir = dir.path().join("json");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--policy", "sclts", "--T", "10", "--seeds", "1", "--format", "json", "--out"])
        .arg(&json_dir)
        .output()
        .unwrap();
    assert_success(&out);
    assert!(!json_dir.join("rounds.csv").exists());
    assert!(json_dir.join("rounds_summary.json").exists());
}

#[test]
fn exports_are_deterministic_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = bin()
            .args(["run", "--config"])
            .arg(&config)
            .args(["--policy", "sclts", "--T", "30", "--seeds", "2", "--out"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_success(&out);
        bytes.push((
            fs::read(out_dir.join("rounds.csv")).unwrap(),
            fs::read(out_dir.join("rounds_summary.json")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn compare_writes_one_summary_per_policy_and_a_combined_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["compare", "--config"])
        .arg(&config)
        .args(["--policies", "sclts,lucb", "--T", "25", "--seeds", "2", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);
    assert!(out_dir.join("sclts_summary.json").exists());
    assert!(out_dir.join("lucb_summary.json").exists());
    assert_eq!(line_count(&out_dir.join("rounds.csv")), 1 + 2 * 2 * 25);
}

#[test]
fn sweep_writes_one_summary_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&config)
        .args([
            "--policy", "sclts", "--param", "alpha", "--values", "0.1,0.3", "--T", "25",
            "--seeds", "2", "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);
    for (name, alpha) in
        [("sweep_alpha_0.1_summary.json", 0.1), ("sweep_alpha_0.3_summary.json", 0.3)]
    {
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join(name)).unwrap()).unwrap();
        assert_eq!(summary["config_echo"]["alpha"], alpha, "{name}");
    }
}

#[test]
fn configuration_problems_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("out");

    // Unknown policy name.
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--policy", "greedy", "--T", "10", "--seeds", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    // Missing instance file.
    let out = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("missing.toml"))
        .args(["--policy", "sclts", "--T", "10", "--seeds", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Zero seeds.
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--policy", "sclts", "--T", "10", "--seeds", "0", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Sweeping a parameter that does not exist.
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&config)
        .args([
            "--policy", "sclts", "--param", "beta", "--values", "0.1", "--T", "10", "--seeds",
            "1", "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown verification suite.
    let out = bin().args(["verify", "--suite", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_prints_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .args(["bounds", "--config"])
        .arg(&config)
        .args(["--policy", "sclts", "--T", "1000"])
        .output()
        .unwrap();
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report["policy"], "sclts");
    assert_eq!(report["horizon"], 1000);
    assert!(report["ntc_bound"]["total"].as_f64().unwrap() > 0.0);
    assert!(report["term1_bound"].as_f64().unwrap() > 0.0);
    assert!(report["constants"]["rho"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_runs_the_lemma_suite() {
    let out = bin().args(["verify", "--suite", "lemmas", "--seeds", "25"]).output().unwrap();
    assert_success(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[PASS] safe_argmax_brute"), "stdout was: {text}");
    assert!(text.contains("all "), "stdout was: {text}");
    assert!(!text.contains("[FAIL]"), "stdout was: {text}");
}
