use std::process::Command;

fn twin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twin"))
}

#[test]
fn run_then_verify_a_small_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{"totalSpots": 60, "durationTicks": 40, "arrivalRate": 0.6, "departureRate": 0.3}"#,
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let out = twin()
        .args(["parking-sim", "run", "--seed", "3", "--config"])
        .arg(&scenario)
        .arg("--history")
        .arg(dir.path().join("history"))
        .arg("--out")
        .arg(&report)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout.matches("PASS (").count(), 4, "{stdout}");

    let out = twin().args(["parking-sim", "verify", "--report"]).arg(&report).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS report is consistent"));
}

#[test]
fn tampered_report_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = twin()
        .args(["parking-sim", "run", "--seed", "5", "--history"])
        .arg(dir.path().join("history"))
        .arg("--out")
        .arg(&report)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    doc["config"]["seed"] = 6.into();
    std::fs::write(&report, doc.to_string()).unwrap();
    let out = twin().args(["parking-sim", "verify", "--report"]).arg(&report).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_report_is_an_error() {
    let out = twin().args(["parking-sim", "verify", "--report", "/nonexistent/report.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
