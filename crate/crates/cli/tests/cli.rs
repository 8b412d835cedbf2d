use std::path::Path;
use std::process::{Command, Output};

fn eventspike(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eventspike")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = eventspike(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) -> String {
    let out_dir = dir.to_str().unwrap();
    ok(&["synth", "--out-dir", out_dir]);
    dir.join("pipeline.json").to_str().unwrap().to_string()
}

#[test]
fn synth_run_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    let stdout = ok(&["run", "--config", &config]);
    assert!(stdout.contains("coverage of planted events: 1.000"), "{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "ok");

    let freq = ok(&["report", "spike-frequency", "--config", &config]);
    assert_eq!(freq.lines().next(), Some("z_threshold,spike_count"));
    assert_eq!(freq.lines().count(), 4);

    let cov: serde_json::Value = serde_json::from_str(&ok(&["report", "coverage", "--config", &config, "--format", "json"])).unwrap();
    assert_eq!(cov["spontaneous_matched"], 0);
    assert!(cov["matched"].as_u64().unwrap() >= 25);

    let lead = ok(&["report", "lead-time", "--config", &config]);
    assert!(lead.starts_with("category,count,lead_days,fraction"));
    assert!(lead.contains("TV & Film"));

    let features = dir.path().join("features.csv");
    ok(&["export-features", "--config", &config, "--out", features.to_str().unwrap()]);
    let exported = std::fs::read_to_string(&features).unwrap();
    assert_eq!(exported, std::fs::read_to_string(dir.path().join("out/features.csv")).unwrap());
}

#[test]
fn stage_commands_reproduce_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    for cmd in ["ingest", "infer-events", "dedup", "cluster", "detect-spikes", "correlate"] {
        ok(&[cmd, "--config", &config]);
    }
    let staged = std::fs::read(dir.path().join("out/matches.jsonl")).unwrap();
    ok(&["run", "--config", &config]);
    assert_eq!(staged, std::fs::read(dir.path().join("out/matches.jsonl")).unwrap());
}

#[test]
fn missing_fixture_fails_extract_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    std::fs::write(dir.path().join("llm_fixtures.json"), "{}").unwrap();
    let out = eventspike(&["run", "--config", &config]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage extract failed") && stderr.contains("prompt hash"), "{stderr}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "failed");
    assert_eq!(report["failed_stage"], "extract");
    let err = report["error"].as_str().unwrap();
    let hash = err.rsplit(' ').next().unwrap();
    assert!(hash.len() == 64 && hash.chars().all(|c| c.is_ascii_hexdigit()), "{err}");
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pipeline.json");
    std::fs::write(&path, r#"{"unknown": 1}"#).unwrap();
    let out = eventspike(&["run", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: loading"));

    let missing = eventspike(&["report", "coverage", "--config", "/nonexistent/pipeline.json"]);
    assert!(!missing.status.success());
}

#[test]
fn stage_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    ok(&["run", "--config", &config]);
    ok(&["cluster", "--config", &config, "--levels", "2,4", "--seed", "3"]);
    let clusters: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/clusters.json")).unwrap()).unwrap();
    let ks: Vec<u64> = clusters["models"].as_array().unwrap().iter().map(|l| l["level_k"].as_u64().unwrap()).collect();
    assert_eq!(ks, vec![2, 4]);

    // A narrower window changes the match scores.
    let before = std::fs::read_to_string(dir.path().join("out/matches.jsonl")).unwrap();
    ok(&["correlate", "--config", &config, "--window-hours", "1"]);
    let after = std::fs::read_to_string(dir.path().join("out/matches.jsonl")).unwrap();
    assert_ne!(before, after);

    let bad = eventspike(&["dedup", "--config", &config, "--threshold", "1.5"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("dedup_threshold"));
}
