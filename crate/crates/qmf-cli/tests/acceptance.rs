//! Acceptance criterion 10: the full `verify` run through the binary
//! completes within the time budget, exits 0, and tags every check in
//! report.json with its claim identifier.

use std::process::Command;
use std::time::Instant;

#[test]
fn criterion_10_full_verify_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("verify.json");
    std::fs::write(&cfg, r#"{"schema": "qmf/1", "mode": "verify", "seed": 7}"#).unwrap();

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_qmf"))
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .expect("binary runs");
    let elapsed = start.elapsed();

    assert!(
        out.status.success(),
        "verify exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "verify took {elapsed:.2?}, budget is 2 minutes"
    );

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["mode"], "verify");
    assert!(report["all_passed"].as_bool().unwrap());
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 20);
    for check in checks {
        assert!(check["id"].as_str().unwrap().len() > 3);
        assert!(check["passed"].as_bool().unwrap());
    }
    // One printed line per check.
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("[pass]")).count(),
        checks.len()
    );
    println!(
        "acceptance 10 (full verify run): PASS — {} checks, exit 0 in {elapsed:.2?}",
        checks.len()
    );
}
