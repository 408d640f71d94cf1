use std::path::Path;
use std::process::{Command, Output};

fn aerocap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aerocap")).arg("--out").arg(out).args(args).output().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aerocap(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(aerocap(dir.path(), &["campaign", "--trials", "many"]).status.code(), Some(1));
    assert_eq!(aerocap(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = aerocap(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gen-data"));
    assert_eq!(aerocap(dir.path(), &["campaign", "--variant", "pipag", "--trials", "1"]).status.code(), Some(2));
    assert_eq!(aerocap(dir.path(), &["campaign", "--variant", "nope"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "unknown_key = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_aerocap")).arg("--config").arg(&bad).arg("report").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_without_campaigns_is_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = aerocap(dir.path(), &["report"]);
    assert!(o.status.success());
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert_eq!(md.lines().count(), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("report.json")).unwrap().trim(), "[]");
}

#[test]
fn campaign_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = aerocap(dir.path(), &["--seed", "3", "campaign", "--variant", "fnpag", "--trials", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trials = std::fs::read_to_string(dir.path().join("trials_fnpag.csv")).unwrap();
    assert!(trials.starts_with("# aerocap "));
    assert_eq!(trials.lines().filter(|l| !l.starts_with('#')).count(), 4);
    assert!(dir.path().join("recoverable.csv").exists());
    let o = aerocap(dir.path(), &["report"]);
    assert!(o.status.success());
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| FNPAG | on | 3 |"), "{md}");
}

#[test]
fn simulate_nominal_writes_telemetry() {
    let dir = tempfile::tempdir().unwrap();
    let o = aerocap(dir.path(), &["simulate", "--nominal"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("simulate/fnpag-trial0-nominal");
    for f in ["trajectory.csv", "guidance.csv", "indicator.csv", "result.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let result = std::fs::read_to_string(run.join("result.json")).unwrap();
    assert!(result.contains("\"capture\""), "{result}");
}
