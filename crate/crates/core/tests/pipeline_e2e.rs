use std::time::Instant;

use eventspike::harness::{run_pipeline, write_synthetic, PipelineConfig, RunStatus, Scenario};

#[test]
fn default_scenario_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let out = write_synthetic(&Scenario::default_synthetic(), dir.path()).unwrap();
    let synth_time = t.elapsed();
    let cfg = PipelineConfig::load(&out.pipeline).unwrap();
    let t = Instant::now();
    let report = run_pipeline(&cfg).unwrap();
    eprintln!("synth {synth_time:?}, run {:?}", t.elapsed());
    eprintln!("{}", serde_json::to_string_pretty(&report.counts).unwrap());
    for (s, d) in &report.timings {
        eprintln!("{s}: {d:?}");
    }
    for f in &report.failures {
        eprintln!("failure: {f}");
    }
    let cov = report.coverage.as_ref().unwrap();
    for p in &cov.plants {
        eprintln!("{} {} spikes={:?} matched={:?} ok={}", p.key, p.network_id, p.spikes, p.matched_events, p.matched_correct);
    }
    eprintln!("coverage {:?} unexplained {}", cov.coverage, cov.unexplained_spikes);
    assert_eq!(report.status, RunStatus::Ok);
}
