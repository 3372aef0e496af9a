use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mecsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mecsim")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_prints_summary_and_writes_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let out = mecsim(&["run", path_str(&scenario("multiMecHost.json")), "--until", "60", "--seed", "3", "--log", path_str(&log)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["contexts"]["ctx-1"]["host"], "mecHost2");
    assert_eq!(summary["alertLatencies"].as_array().unwrap().len(), 1);

    let again = mecsim(&["summarize", path_str(&log)]);
    assert!(again.status.success());
    assert_eq!(serde_json::from_slice::<Value>(&again.stdout).unwrap(), summary);
}

#[test]
fn validate_accepts_shipped_scenario() {
    let out = mecsim(&["validate", path_str(&scenario("multiMecHost.json"))]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn validate_reports_diagnostics_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"dangerZones": [{"name": "z", "center": {"x": 0, "y": 0}, "radius": -1}]}"#).unwrap();
    let out = mecsim(&["validate", path_str(&path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("/dangerZones/0/radius"));
}

#[test]
fn realtime_scenario_refuses_virtual_mode() {
    let out = mecsim(&["run", path_str(&scenario("emulated.json")), "--until", "0.1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("realtime"));
}

#[test]
fn corrupt_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("broken.jsonl");
    std::fs::write(&log, "{\"t\":0.0,\"node\":\"x\",\"kind\":\"A\",\"attrs\":{}}\n{\"t\":").unwrap();
    let out = mecsim(&["summarize", path_str(&log)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_file_fails() {
    assert!(!mecsim(&["run", "/nonexistent/scenario.json"]).status.success());
    assert!(!mecsim(&["summarize", "/nonexistent/log.jsonl"]).status.success());
}
