use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn twoweight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoweight"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn verify_on_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoweight(&["run", "--suite", "verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = report(dir.path());
    let names: Vec<&str> = rep["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            assert_eq!(c["passed"], Value::Bool(true));
            c["name"].as_str().unwrap()
        })
        .collect();
    for expected in [
        "parseval",
        "paraproduct_coefficients",
        "well_localized",
        "remainder_off_band",
        "carleson_packing",
    ] {
        assert!(names.contains(&expected), "missing {expected}");
    }
}

#[test]
fn inverted_levels_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    let text = r#"{
        "lattice": {"dim": 1, "top_level": -3, "leaf_level": -3, "roots": [{"level": -3, "coords": [0]}]},
        "mu": {"generator": "uniform"},
        "nu": {"generator": "uniform"},
        "operator": {"type": "shift"}
    }"#;
    std::fs::write(&config, text).unwrap();
    let out = twoweight(&["run", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn unknown_tolerance_and_suite_are_usage_errors() {
    assert_eq!(twoweight(&["run", "--tolerance-override", "bogus=1"]).status.code(), Some(2));
    assert_eq!(twoweight(&["run", "--tolerance-override", "zero"]).status.code(), Some(2));
    assert_eq!(twoweight(&["run", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn impossible_tolerance_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoweight(&[
        "run",
        "--suite",
        "verify",
        "--tolerance-override",
        "identity=0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let rep = report(dir.path());
    assert!(rep["checks"].as_array().unwrap().iter().any(|c| c["passed"] == Value::Bool(false)));
}

#[test]
fn search_is_deterministic_and_replayable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = twoweight(&["run", "--suite", "search", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(without_timestamp(report(a.path())), without_timestamp(report(b.path())));
    let strip = |d: &Path| {
        std::fs::read_to_string(d.join("report.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(a.path()), strip(b.path()));

    let artifact = a.path().join("artifact.json");
    assert_eq!(twoweight(&["replay", artifact.to_str().unwrap()]).status.code(), Some(0));

    let mut value: Value = serde_json::from_str(&std::fs::read_to_string(&artifact).unwrap()).unwrap();
    let mass = &mut value["instance"]["mu"][0];
    *mass = Value::from(mass.as_f64().unwrap() * 2.0);
    let tampered = a.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&value).unwrap()).unwrap();
    let out = twoweight(&["replay", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn replay_rejects_empty_and_corrupt_paths() {
    assert_eq!(twoweight(&["replay", ""]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{").unwrap();
    assert_eq!(twoweight(&["replay", junk.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(twoweight(&["replay", "/nonexistent/artifact.json"]).status.code(), Some(2));
}

#[test]
fn every_suite_writes_its_tables() {
    let cases: [(&str, &[&str]); 4] = [
        ("testing", &["ratios.csv", "ratio_suprema.csv"]),
        ("carleson", &["greedy.csv", "random_sequences.csv", "carleson_sequence.csv"]),
        ("decompose", &["decomposition.csv"]),
        ("search", &["artifact.json"]),
    ];
    for (suite, files) in cases {
        let dir = tempfile::tempdir().unwrap();
        let out = twoweight(&["run", "--suite", suite, "--threads", "1", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "suite {suite}");
        for f in files {
            assert!(dir.path().join(f).exists(), "{suite} missing {f}");
        }
    }
}

#[test]
fn csv_rows_match_report_tables() {
    let dir = tempfile::tempdir().unwrap();
    twoweight(&["run", "--suite", "testing", "--out", dir.path().to_str().unwrap()]);
    let rep = report(dir.path());
    let rows = rep["tables"]["ratios"]["rows"].as_array().unwrap();
    let csv = std::fs::read_to_string(dir.path().join("ratios.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(lines.len(), rows.len());
    for (line, row) in lines.iter().zip(rows) {
        for (cell, v) in line.split(',').zip(row.as_array().unwrap()) {
            let parsed: f64 = cell.parse().unwrap();
            assert_eq!(parsed, v.as_f64().unwrap());
        }
    }
}
