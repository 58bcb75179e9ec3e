use std::path::Path;
use std::process::{Command, Output};

use segalign::align::SegmentMatch;

const BIN: &str = env!("CARGO_BIN_EXE_segalign");

/// Small enough to finish in seconds.
const SMALL: &[&str] = &[
    "--set", "data.queries=3",
    "--set", "data.distractors=2",
    "--set", "training.pairs=12",
    "--set", "training.calibration_pairs=4",
    "--set", "training.sgd.epochs=2",
    "--set", "index.top_n=10",
];

fn segalign(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SEGALIGN_SEED")
        .output()
        .expect("binary runs")
}

fn run(dir: &Path, method: &str) -> serde_json::Value {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--out", out, "--method", method];
    args.extend_from_slice(SMALL);
    let o = segalign(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn keys(v: &serde_json::Value) -> Vec<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn demo_run_verifies_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(dir.path(), "dp");
    assert_eq!(report["method"], "dp");
    assert!(report["eval"]["f1"].as_f64().unwrap() >= 0.0);
    let ok = segalign(&["verify", dir.path().to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    let matches = dir.path().join("matches.jsonl");
    let mut bytes = std::fs::read(&matches).unwrap();
    bytes.extend_from_slice(b"\n");
    std::fs::write(&matches, bytes).unwrap();
    let bad = segalign(&["verify", dir.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(5));
}

#[test]
fn baseline_and_detector_reports_share_a_schema() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let dp = run(a.path(), "dp");
    let spd = run(b.path(), "spd");
    assert_eq!(keys(&dp), keys(&spd));
    assert_eq!(keys(&dp["eval"]), keys(&spd["eval"]));
    assert_ne!(dp["config_hash"], spd["config_hash"]);
    assert!(b.path().join("detector.sgdm").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = segalign(&["run", "--out", out, "--set", "index.no_such_key=3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = segalign(&["run", "--out", out, "--set", "index.top_n=0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pair_mode_prints_segment_lines() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = segalign(&["synth", "--out", data.to_str().unwrap(), "--pairs", "1", "--distractors", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let q = data.join("queries.sgaf");
    let r = data.join("refs.sgaf");
    for method in ["hough", "tn", "dp"] {
        let o = segalign(&[
            "align", "--method", method, "--pair", "q00000", "r00000",
            "--queries", q.to_str().unwrap(), "--gallery", r.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let lines: Vec<SegmentMatch> = String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert!(!lines.is_empty(), "{method} found nothing");
        assert!(lines.iter().all(|m| m.is_valid()));
    }
}

#[test]
fn environment_overrides_the_file_and_flags_override_both() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\n[data]\nqueries = 2\n").unwrap();
    let data = dir.path().join("d");
    let o = Command::new(BIN)
        .args(["synth", "--out", data.to_str().unwrap(), "--config", cfg.to_str().unwrap()])
        .args(["--set", "data.distractors=1"])
        .env("SEGALIGN_DATA__QUERIES", "4")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pairs"], 4);
    assert_eq!(manifest["distractors"].as_array().unwrap().len(), 1);
}
