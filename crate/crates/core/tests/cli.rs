use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nta-verify"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn validate_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "[domain]\nkind = \"sawtooth\"\nlipschitz = 0.5\n[cone]\naperture = 1.0\n[sweep]\np_grid = [4.0, 3.0]\n",
    )
    .unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("aperture must exceed 1+2M = 2"), "{err}");
    assert!(err.contains("grid not increasing"), "{err}");
}

#[test]
fn parse_errors_carry_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "[domain]\ndim = 2\nkind = = \"flat\"\n").unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn hardy_run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "hardy", "--config"])
        .arg(configs().join("hardy-2d.toml"))
        .arg("--out")
        .arg(dir.path())
        .args(["--seed", "3", "--jobs", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "hardy");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["pass"], true);
    let checks = manifest["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 4);
    let mut ids: Vec<&str> = checks.iter().map(|c| c["id"].as_str().unwrap()).collect();
    ids.dedup();
    assert_eq!(ids.len(), 4);
    for name in ["reports.json", "reports.csv", "run-info.txt"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    assert!(csv.starts_with("name,left,right,ratio,budget,pass,vacuous,context"));
}

#[test]
fn failed_runs_leave_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    // the extrapolation experiment needs the flat domain
    let out = bin()
        .args(["run", "extrapolate", "--config"])
        .arg(configs().join("hardy-sawtooth.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let marker = std::fs::read_to_string(dir.path().join("FAILED")).unwrap();
    assert!(marker.contains("experiment extrapolate"), "{marker}");
    assert!(dir.path().join("run-info.txt").exists());
}

#[test]
fn unknown_experiment_is_rejected() {
    let out = bin()
        .args(["run", "nope", "--config"])
        .arg(configs().join("hardy-2d.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));
}
