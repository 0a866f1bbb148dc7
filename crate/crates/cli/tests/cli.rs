use std::path::PathBuf;
use std::process::{Command, Output};

fn write_config(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hlcount-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlcount"))
        .args(args)
        .env_remove("HLCOUNT_BUDGET")
        .output()
        .unwrap()
}

const CONE: &str = r#"{"system": {"forms": ["x1^2 + x2^2 - x3^2"]}, "schedule": [5, 10], "prime_bound": 13, "q_max": 30, "measure": {"samples": 4096}}"#;

#[test]
fn count_reports_oracle_value_and_defaults() {
    let cfg = write_config("count.json", CONE);
    let out = run(&["--config", cfg.to_str().unwrap(), "count"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"][0]["count"], 57);
    assert_eq!(v["config"]["delta"], 0.2);
    assert_eq!(v["config"]["box"], serde_json::json!([[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]));
}

#[test]
fn csv_projection() {
    let cfg = write_config("csv.json", CONE);
    let out = run(&["--config", cfg.to_str().unwrap(), "--format", "csv", "count"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("P,N,method\n5,57,"));
    let out = run(&["--config", cfg.to_str().unwrap(), "--format", "csv", "pencil"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_2() {
    let cfg = write_config("bad.json", r#"{"system": {"forms": ["x1^2"]}, "schedule": [3, 2]}"#);
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "count"]).status.code(), Some(2));
    assert_eq!(run(&["count"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let cfg = write_config("noseed.json", CONE);
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "integral"]).status.code(), Some(2));
}

#[test]
fn budget_exhaustion_exits_3() {
    let cfg = write_config("budget.json", CONE);
    let out = run(&["--config", cfg.to_str().unwrap(), "--budget", "10", "count"]);
    assert_eq!(out.status.code(), Some(3));
    let out = Command::new(env!("CARGO_BIN_EXE_hlcount"))
        .args(["--config", cfg.to_str().unwrap(), "count"])
        .env("HLCOUNT_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_tolerance_failure_still_writes_report() {
    // the ternary cone is far from its prediction at these scales
    let cfg = write_config("verify.json", CONE);
    let report = cfg.with_file_name("verify-out.json");
    let out = run(&["--config", cfg.to_str().unwrap(), "--seed", "4", "--out", report.to_str().unwrap(), "verify"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["result"]["verdicts"]["within_tolerance"], false);
    assert_eq!(v["result"]["oracle"][0]["equal"], true);
    assert_eq!(v["config"]["seed"], 4);
}

#[test]
fn diagnose_is_deterministic() {
    let cfg = write_config(
        "diag.json",
        r#"{"system": {"forms": ["x1^2 + x2^2 - x3^2"]}, "schedule": [5], "seed": 2,
            "diagnostics": ["orthogonality", "repulsion"], "diagnostic_settings": {"random_samples": 8}}"#,
    );
    let a = run(&["--config", cfg.to_str().unwrap(), "diagnose"]);
    let b = run(&["--config", cfg.to_str().unwrap(), "diagnose"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["result"]["records"][0]["orthogonality"], 57);
}

#[test]
fn pencil_and_arcs() {
    let cfg = write_config(
        "pencil.json",
        r#"{"system": {"forms": ["x1^2 + x2^2", "x3^2 + x4^2"]}}"#,
    );
    let out = run(&["--config", cfg.to_str().unwrap(), "pencil"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["sigma_r"]["lower"], 2);
    let out = run(&["--config", cfg.to_str().unwrap(), "arcs", "--p", "32"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["q_max"], 2);
}
