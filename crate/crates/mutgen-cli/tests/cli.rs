//! End-to-end smoke tests for the `mutgen` binary over the demo corpus.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("fixtures")
}

fn mutgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mutgen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).expect("utf-8 stdout")
}

#[test]
fn mutants_subcommand_lists_the_expected_population() {
    let corpus = fixtures_root().join("corpus");
    let output = mutgen(&["mutants", "--corpus", corpus.to_str().unwrap(), "--task", "any_int"]);
    let value: serde_json::Value =
        serde_json::from_str(&stdout_of(&output)).expect("JSON output");
    assert_eq!(value["task_id"], "any_int");
    assert_eq!(value["total"], 10);
    let mutants = value["mutants"].as_array().expect("mutant array");
    assert_eq!(mutants.len(), 10);
    for mutant in mutants {
        assert!(mutant["mutant_id"].is_string());
        assert!(mutant["operator"].is_string());
        assert!(mutant["line"].is_u64());
        assert!(mutant.get("source").is_none(), "sources only with --sources");
    }

    let output = mutgen(&[
        "mutants",
        "--corpus",
        corpus.to_str().unwrap(),
        "--task",
        "any_int",
        "--sources",
    ]);
    let value: serde_json::Value =
        serde_json::from_str(&stdout_of(&output)).expect("JSON output");
    assert!(value["mutants"][0]["source"].is_string());
}

#[test]
fn run_report_and_minimize_round_trip() {
    let corpus = fixtures_root().join("corpus");
    let responses = fixtures_root().join("responses");
    let out_dir = tempfile::tempdir().expect("temp dir");

    // Full corpus run against the scripted fixtures.
    let output = mutgen(&[
        "run",
        "--corpus",
        corpus.to_str().unwrap(),
        "--fixtures",
        responses.to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("any_int"), "rendered report names the tasks");

    let report_path = out_dir.path().join("report.json");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).expect("report.json"))
            .expect("report parses");
    assert_eq!(report["aggregates"]["tasks"], 3);
    let ids: Vec<&str> = report["tasks"]
        .as_array()
        .expect("task rows")
        .iter()
        .map(|row| row["task_id"].as_str().expect("task id"))
        .collect();
    assert_eq!(ids, ["add_two", "any_int", "const_five"]);
    assert!(out_dir.path().join("report.txt").exists());
    let suite_path = out_dir.path().join("suites").join("any_int.py");
    let suite = std::fs::read_to_string(&suite_path).expect("final suite written");
    assert!(suite.starts_with("def test():"));

    // Re-render the report from disk.
    let output = mutgen(&["report", "--report", report_path.to_str().unwrap()]);
    let rendered = stdout_of(&output);
    assert!(rendered.contains("any_int"));
    assert!(rendered.contains("const_five"));

    // Re-minimize the written final suite: already minimal, so everything
    // is kept.
    let output = mutgen(&[
        "minimize",
        "--corpus",
        corpus.to_str().unwrap(),
        "--task",
        "any_int",
        "--suite",
        suite_path.to_str().unwrap(),
    ]);
    let minimized = stdout_of(&output);
    assert_eq!(minimized, suite, "an already-minimal suite is unchanged");
}
