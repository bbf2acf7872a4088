use std::path::PathBuf;
use std::process::{Command, Output};

fn scripts() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scripts")
}

fn teamsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamsim"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_passes_a_good_scenario() {
    let out = teamsim(&["check", scripts().join("task1.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("1 of 1 scenarios passed"));
}

#[test]
fn check_exits_one_when_a_scenario_misses_its_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let mut s: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(scripts().join("task5_sequential.json")).unwrap(),
    )
    .unwrap();
    s["expect_goal"] = true.into();
    s["rules"] = scripts().join("task5.rules.json").to_str().unwrap().into();
    let path = dir.path().join("s.json");
    std::fs::write(&path, s.to_string()).unwrap();
    let out = teamsim(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("FAIL"));
}

#[test]
fn check_reports_a_broken_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"task\": 1,").unwrap();
    let out = teamsim(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn replay_prints_masked_events_and_rejects_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let out = teamsim(&[
        "check",
        scripts().join("task1.json").to_str().unwrap(),
        "--log-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let transcript = std::fs::read_dir(dir.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let out = teamsim(&["replay", "--mask-wall-time", transcript.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["kind"], "task_selected");
    assert!(lines.iter().all(|l| l["wall_time"] == ""));

    let text = std::fs::read_to_string(&transcript).unwrap();
    let gapped: Vec<&str> = text
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != 1)
        .map(|(_, l)| l)
        .collect();
    let path = dir.path().join("gapped.jsonl");
    std::fs::write(&path, gapped.join("\n")).unwrap();
    let out = teamsim(&["replay", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gap"));
}

#[test]
fn serve_names_an_unreachable_endpoint() {
    let out = teamsim(&[
        "serve",
        "--endpoint",
        "http://127.0.0.1:9/v1/chat/completions",
        "--port",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("127.0.0.1:9"));
}
