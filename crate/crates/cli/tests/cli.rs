use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgdns"))
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/split16.json")
}

fn run(scenario: &Path, out: &Path) -> std::process::Output {
    bin()
        .args(["run", "--scenario"])
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn fixture_runs_clean_and_ends_in_partition_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&fixture(), dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["final_partitions"], serde_json::json!({ "0": 16 }));
    assert_eq!(summary["violations"], 0);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with(
        "round,gossip_sent,record_sent,baseline_sent,components,converged,violations\n"
    ));
    let golden =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/split16.jsonl");
    assert_eq!(
        std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap(),
        std::fs::read_to_string(golden).unwrap()
    );
}

#[test]
fn overlapping_fragments_exit_2_with_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "bad.json",
        r#"{"schema":1,"n":8,"max_rounds":5,"events":[{"round":1,"kind":"split","fragments":[[0,1,2],[2,3]]}]}"#,
    );
    let out = run(&s, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("events[0].fragments"));
}

#[test]
fn syntax_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "bad.json",
        "{\n  \"schema\": 1,\n  \"n\": oops\n}",
    );
    let out = run(&s, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn one_round_on_64_nodes_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "short.json",
        r#"{"schema":1,"n":64,"max_rounds":1}"#,
    );
    let out = run(&s, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_scenario_is_an_environment_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&dir.path().join("absent.json"), dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_flag_is_the_only_source_of_randomness() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "shuffled.json",
        r#"{"schema":1,"n":24,"max_rounds":20,"delivery":"shuffled_duplicated","id_mode":"hashed"}"#,
    );
    let read = |sub: &str, seed: &str| {
        let out_dir = dir.path().join(sub);
        let st = bin()
            .args(["run", "--seed", seed, "--scenario"])
            .arg(&s)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(st.status.success());
        std::fs::read_to_string(out_dir.join("events.jsonl")).unwrap()
    };
    assert_eq!(read("a", "9"), read("b", "9"));
    assert_ne!(read("a", "9"), read("c", "10"));
}

#[test]
fn sweep_writes_rows_and_reports_na_for_one_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--sizes", "16", "--trials", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("N/A"));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sweep_keeps_baseline_at_least_half_again_as_costly() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "sweep",
            "--sizes",
            "16,64,256,1024",
            "--trials",
            "5",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("sweep_summary.json")).unwrap(),
    )
    .unwrap();
    for row in summary["rows"].as_array().unwrap() {
        let s = row["msgs_per_round"].as_f64().unwrap();
        let b = row["baseline_msgs_per_round"].as_f64().unwrap();
        assert!(b / s >= 1.5, "{row}");
    }
    assert!(summary["msgs_exponent_in_n"].as_f64().is_some());
}

#[test]
fn zero_trials_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--trials", "0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_exits_1_when_the_address_is_taken() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    let out = bin()
        .args(["serve", "--n", "8", "--bind", &addr])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
