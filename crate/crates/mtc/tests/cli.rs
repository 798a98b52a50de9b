//! End-to-end tests of the command-line interface: exit codes, report
//! output, and determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn mtc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("mtc-test-{}-{name}", std::process::id()))
}

#[test]
fn check_passing_system_exits_zero() {
    let out = mtc(&["check", &fixture("section7.json"), "--ii4", "--ii6"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("II4: pass"));
    assert!(text.contains("II6: pass"));
}

#[test]
fn check_inadmissible_control_exits_one() {
    let out = mtc(&[
        "check",
        &fixture("example4a.json"),
        "--control",
        &fixture("u_const.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("II5: FAIL"), "{text}");
    assert!(text.contains("6.9999999999999996e-1"), "{text}");
}

#[test]
fn missing_file_exits_two() {
    let out = mtc(&["check", "definitely-not-here.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn malformed_system_exits_two() {
    let path = temp_path("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = mtc(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_file(&path).ok();
}

#[test]
fn gramian_reports_and_writes_outputs() {
    let json_path = temp_path("gramian.json");
    let csv_path = temp_path("gramian.csv");
    let out = mtc(&[
        "gramian",
        &fixture("example4a.json"),
        "--from",
        "0,0",
        "--to",
        "1,1",
        "--out",
        json_path.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("rank 2"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["rank"], 2);
    let matrix_00 = report["matrix"][0][0].as_f64().unwrap();
    assert!((matrix_00 - 1.0 / 3.0).abs() < 1e-9);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let first = csv.lines().next().unwrap().split(',').next().unwrap();
    assert!((first.parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-9);
    std::fs::remove_file(&json_path).ok();
    std::fs::remove_file(&csv_path).ok();
}

#[test]
fn w_estimate_is_deterministic_under_seed() {
    let sys = fixture("rankone.json");
    let args = [
        "w",
        sys.as_str(),
        "--from",
        "0,0",
        "--to",
        "1,1",
        "--curves",
        "3",
        "--seed",
        "5",
    ];
    let a = mtc(&args);
    let b = mtc(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("dimension 1 of 2"));
}

#[test]
fn feasible_transfer_exits_zero() {
    let out = mtc(&[
        "transfer",
        &fixture("section7.json"),
        "--from",
        "0,0",
        "--x0",
        "1,2",
        "--to",
        "1,1",
        "--y",
        "0,0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("feasible"));
}

#[test]
fn infeasible_transfer_exits_one() {
    let json_path = temp_path("transfer.json");
    let out = mtc(&[
        "transfer",
        &fixture("rankone.json"),
        "--from",
        "0,0",
        "--x0",
        "0,0",
        "--to",
        "1,1",
        "--y",
        "0,1",
        "--out",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("INFEASIBLE"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["feasible"], false);
    assert_eq!(report["status"], "no_minimum");
    std::fs::remove_file(&json_path).ok();
}

#[test]
fn simulate_runs_expression_control() {
    let path = temp_path("u_sim.json");
    std::fs::write(
        &path,
        r#"{ "u": [ [["0.75"]], [["-1.5"]] ] }"#,
    )
    .unwrap();
    let report_path = temp_path("sim-report.json");
    let out = mtc(&[
        "simulate",
        &fixture("section7.json"),
        "--from",
        "0,0",
        "--x0",
        "0,0",
        "--to",
        "1,1",
        "--control",
        path.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!((report["x"][0].as_f64().unwrap() - 0.75).abs() < 1e-9);
    assert!((report["x"][1].as_f64().unwrap() + 1.5).abs() < 1e-9);
    std::fs::remove_file(&path).ok();
    std::fs::remove_file(&report_path).ok();
}

#[test]
fn demo_list_and_run() {
    let out = mtc(&["demo", "--list"]);
    assert_eq!(out.status.code(), Some(0));
    let listing = stdout(&out);
    assert!(listing.lines().count() >= 4);
    let out = mtc(&["demo", "section7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("result: pass"));
}

#[test]
fn unknown_demo_exits_two() {
    let out = mtc(&["demo", "no-such-scenario"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_env_var() {
    let out = Command::new(env!("CARGO_BIN_EXE_mtc"))
        .args(["demo", "rankone"])
        .env("MTC_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let bad = Command::new(env!("CARGO_BIN_EXE_mtc"))
        .args(["demo", "rankone"])
        .env("MTC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
