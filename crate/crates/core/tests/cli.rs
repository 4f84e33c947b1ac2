use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mec4c"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

#[test]
fn run_writes_the_run_directory() {
    let out = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["run", "--config"])
        .arg(config("tiny.json"))
        .args(["--seed", "11", "--rule", "gs", "--epochs", "2", "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let dir = out.path().join("tiny-gs-s11");
    for f in ["report.json", "trace.csv", "metrics.csv", "hits.csv", "meta.json"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 + 1);
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"rounding": {"theta": 7}}"#).unwrap();
    let out = bin().args(["validate-config", "--config"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
    std::fs::write(&p, r#"{"unknown_field": 1}"#).unwrap();
    let out = bin().args(["run", "--config"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn validate_config_prints_defaults() {
    let out = bin().args(["validate-config", "--config"]).arg(config("reference.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"xi\": 0.14285"));
}

#[test]
fn not_converged_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("short.json");
    let mut cfg = mec4c::fixtures::desk_config(10, 4, 3);
    cfg.name = "short".into();
    cfg.solver.max_iters = 2;
    std::fs::write(&p, serde_json::to_string(&cfg).unwrap()).unwrap();
    let st = bin().args(["run", "--config"]).arg(&p).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(dir.path().join("short-cyclic-s10/report.json").is_file());
}

#[test]
fn oracle_and_cluster_verbs() {
    let out = bin().args(["oracle", "--config"]).arg(config("tiny.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "optimal");
    let out = bin().args(["cluster", "--config"]).arg(config("reference.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!v["spaces"].as_array().unwrap().is_empty());
}

#[test]
fn compare_rules_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["compare-rules", "--config"]).arg(config("tiny.json")).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for r in ["cyclic", "gs", "random"] {
        assert!(text.contains(r));
    }
    assert!(dir.path().join("tiny-compare-s7/trace_gs.csv").is_file());
}
