use std::io::Write;
use std::process::{Command, Stdio};

use cfbd::report::{Format, Report};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cfbd"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn simulate_writes_both_designs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let status = bin()
        .args(["simulate", "--scenario", "3", "--reps", "200", "--seed", "7", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let report = Report::parse(&text, Format::Csv).unwrap();
    // 6 doses + none + summary, for each design
    assert_eq!(report.rows.len(), 16);
    assert_eq!(report.rows[0].design, "CFBD");
    assert_eq!(report.rows[8].design, "c-CFBD");
    assert!(report.rows.iter().all(|r| r.reps == 200 && r.seed == 7));

    // same seed, same bytes
    let again = dir.path().join("again.csv");
    bin()
        .args(["simulate", "--scenario", "one-agent-3", "--reps", "200", "--seed", "7", "--workers", "2", "--out"])
        .arg(&again)
        .status()
        .unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), text.into_bytes());
}

#[test]
fn simulate_from_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.json");
    std::fs::write(
        &file,
        r#"{"agents": 2, "rates": [[0.05, 0.1, 0.2], [0.1, 0.2, 0.35]], "theta0": 0.2, "delta0": 0.05,
            "design": {"calibrate": true, "n_max": 30}, "reps": 50, "seed": 3}"#,
    )
    .unwrap();
    let output = bin()
        .args(["simulate", "--format", "json", "--scenario"])
        .arg(&file)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report = Report::parse(&String::from_utf8(output.stdout).unwrap(), Format::Json).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.dose.as_str()).collect();
    assert_eq!(labels, ["1-2 pts", "3-5 pts", "6-10 pts", ">10 pts", "none", "summary"]);
    assert!(report.rows.iter().all(|r| r.design == "c-CFBD" && r.e_n <= 30.0));

    let bad = bin().args(["simulate", "--scenario", "nope"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown scenario"));
}

#[test]
fn conduct_reads_cohorts_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let save = dir.path().join("trial.json");
    let mut child = bin()
        .args(["conduct", "--calibrate", "--save"])
        .arg(&save)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    // every patient has a DLT: the trial stops once n_min is reached
    let input = "x\n".to_string() + &"1\n".repeat(30);
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.starts_with("c-CFBD trial"));
    assert!(text.contains("enter a DLT count"));
    assert!(text.contains("trial stopped (AllToxic); recommended dose: none"), "{text}");
    let state: cfbd::TrialState = serde_json::from_slice(&std::fs::read(&save).unwrap()).unwrap();
    assert_eq!(state.n_total, 10);
}
