//! End-to-end checks of the `rhsim` binary: exit codes, file outputs,
//! and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rhsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rhsim"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn scenario_fixture_exits_zero() {
    let out = rhsim()
        .args(["scenario", "--seed", "7"])
        .arg(fixture("nashville.json"))
        .args(["--config"])
        .arg(fixture("net2x2.json"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("scenario passed"));
}

#[test]
fn missing_scenario_file_is_usage_error() {
    let out = rhsim()
        .args(["scenario", "no-such-file.json", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_seed_is_usage_error() {
    let out = rhsim()
        .args(["bench", "--profile", "constant", "--delay-ms", "100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn bench_writes_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhsim()
        .args([
            "bench",
            "--profile",
            "constant",
            "--delay-ms",
            "50",
            "--deviation",
            "0.3",
            "--rides",
            "5",
            "--seed",
            "11",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 6, "header plus six rows per ride");
    assert!(csv.starts_with("tx_id,ride_id,fn,peer_ms,orderer_ms,event_ms,valid,block_height"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["totals"]["committed_valid"], 30);
}

#[test]
fn zero_delay_is_rejected() {
    let out = rhsim()
        .args([
            "bench",
            "--profile",
            "constant",
            "--delay-ms",
            "0",
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn poisson_accepts_either_lambda_unit_but_not_both() {
    let dir = tempfile::tempdir().unwrap();
    let ok = rhsim()
        .args([
            "bench",
            "--profile",
            "poisson",
            "--lambda-interarrival-ms",
            "20",
            "--rides",
            "3",
            "--seed",
            "5",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let both = rhsim()
        .args([
            "bench",
            "--profile",
            "poisson",
            "--lambda-tps",
            "50",
            "--lambda-interarrival-ms",
            "20",
            "--seed",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn dump_verifies_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let dump = rhsim()
        .args(["dump", "--seed", "7", "--config"])
        .arg(fixture("net2x2.json"))
        .arg(fixture("table2_fixture.json"))
        .output()
        .unwrap();
    assert!(dump.status.success());
    let dump_path = dir.path().join("chain.jsonl");
    std::fs::write(&dump_path, &dump.stdout).unwrap();

    let verify = rhsim().arg("verify-chain").arg(&dump_path).output().unwrap();
    assert!(verify.status.success(), "{}", stdout(&verify));
    assert!(stdout(&verify).starts_with("ok:"));

    // flip one recorded timestamp and verification must fail
    let text = String::from_utf8(dump.stdout.clone()).unwrap();
    let tampered: Vec<String> = text
        .lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            if v["height"] == 2 {
                let t = v["timestamp_us"].as_u64().unwrap();
                v["timestamp_us"] = (t + 1).into();
            }
            serde_json::to_string(&v).unwrap()
        })
        .collect();
    let bad_path = dir.path().join("tampered.jsonl");
    std::fs::write(&bad_path, tampered.join("\n") + "\n").unwrap();
    let verify = rhsim().arg("verify-chain").arg(&bad_path).output().unwrap();
    assert_eq!(verify.status.code(), Some(1));
    assert!(stdout(&verify).contains("chain broken at height 3"), "{}", stdout(&verify));
}

#[test]
fn dump_is_stable_across_runs_with_fixed_seed() {
    let run = || {
        rhsim()
            .args(["dump", "--seed", "9", "--config"])
            .arg(fixture("net2x2.json"))
            .arg(fixture("nashville.json"))
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run(), run());
}

#[test]
fn sweep_writes_per_point_reports_and_trend() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhsim()
        .args([
            "sweep",
            "--axis",
            "peers",
            "--from",
            "1",
            "--to",
            "2",
            "--policy",
            "ANY_ONE",
            "--rides",
            "4",
            "--delay-ms",
            "50",
            "--seed",
            "3",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("peers1/metrics.csv").exists());
    assert!(dir.path().join("peers2/summary.json").exists());
    let trend = std::fs::read_to_string(dir.path().join("trend.csv")).unwrap();
    assert_eq!(trend.lines().count(), 3, "header plus one row per point");
}

#[test]
fn adversary_verdicts_exit_zero_when_defended() {
    for scenario in ["eclipse", "malicious-query", "stale-endorser"] {
        let out = rhsim()
            .args(["adversary", "--scenario", scenario, "--seed", "13"])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{scenario}: {}",
            stdout(&out)
        );
        assert!(stdout(&out).contains("verdict: defended"));
    }
}

#[test]
fn unknown_adversary_scenario_is_usage_error() {
    let out = rhsim()
        .args(["adversary", "--scenario", "ddos", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
