use chrono::Duration;

use eventspike::baseline::{detect_spikes, score_rolling, DetectionConfig, DEFAULT_STD_FLOOR_FRACTION};
use eventspike::harness::{run_pipeline, synth_traffic, write_synthetic, PipelineConfig, RunStatus, Scenario};
use eventspike::model::EventAbstraction;
use eventspike::store::load_live;

fn one_plant(edit: impl FnOnce(&mut eventspike::harness::PlantedEvent)) -> Scenario {
    let mut s = Scenario::default_synthetic();
    s.planted_events.truncate(1);
    edit(&mut s.planted_events[0]);
    s.validate().unwrap();
    s
}

fn run(s: &Scenario) -> (tempfile::TempDir, PipelineConfig) {
    let dir = tempfile::tempdir().unwrap();
    let out = write_synthetic(s, dir.path()).unwrap();
    let cfg = PipelineConfig::load(&out.pipeline).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.status, RunStatus::Ok, "{:?}", report.error);
    (dir, cfg)
}

#[test]
fn checked_in_scenario_matches_builtin() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/default.json")).unwrap();
    let s: Scenario = serde_json::from_str(&text).unwrap();
    assert_eq!(s, Scenario::default_synthetic());
}

#[test]
fn duplicated_announcement_leaves_one_event() {
    let s = one_plant(|e| e.duplicate_posts = 2);
    let headline = s.planted_events[0].headline.clone();
    let (_dir, cfg) = run(&s);
    let events: Vec<EventAbstraction> = load_live(cfg.out_path("events.jsonl")).unwrap();
    let same: Vec<&EventAbstraction> = events.iter().filter(|e| e.description.starts_with(&headline)).collect();
    assert_eq!(same.len(), 1, "{events:#?}");
    assert_eq!(same[0].source_records.len(), 3);
}

#[test]
fn thirty_day_lead_is_recovered() {
    let s = one_plant(|e| e.lead_days = 30.0);
    let plant = s.planted_events[0].clone();
    let (_dir, cfg) = run(&s);
    let events: Vec<EventAbstraction> = load_live(cfg.out_path("events.jsonl")).unwrap();
    let e = events.iter().find(|e| e.description == plant.headline).unwrap();
    assert_eq!(e.event_time_utc, Some(plant.time));
    assert_eq!(e.first_mentioned_at, plant.time - Duration::days(30));
}

#[test]
fn noiseless_unplanted_traffic_has_no_spikes() {
    let mut s = Scenario::default_synthetic();
    s.noise_std_fraction = 0.0;
    s.planted_events.clear();
    let (series, labels) = synth_traffic(&s);
    assert!(labels.is_empty());
    for t in &series {
        let z = score_rolling(t, 4, 5, DEFAULT_STD_FLOOR_FRACTION).unwrap();
        assert!(detect_spikes(&z, &DetectionConfig::default()).unwrap().is_empty(), "{}", t.network_id);
    }
}

#[test]
fn hour_long_plant_is_mostly_covered_by_its_spike() {
    let s = one_plant(|e| {
        e.magnitude_z = 5.0;
        e.duration_minutes = 60;
    });
    let plant = &s.planted_events[0];
    let (series, _) = synth_traffic(&s);
    let t = series.iter().find(|t| t.network_id == plant.network_id).unwrap();
    let z = score_rolling(t, 4, 5, DEFAULT_STD_FLOOR_FRACTION).unwrap();
    let spikes = detect_spikes(&z, &DetectionConfig::default()).unwrap();
    let overlap = spikes
        .iter()
        .map(|sp| (sp.end.min(plant.end()) - sp.start.max(plant.time)).num_seconds().max(0))
        .max()
        .unwrap_or(0);
    assert!(overlap as f64 >= 0.8 * 3600.0, "overlap {overlap}s, spikes {spikes:?}");
}

#[test]
fn empty_corpus_runs_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let out = write_synthetic(&Scenario::default_synthetic(), dir.path()).unwrap();
    std::fs::write(&out.posts, "").unwrap();
    let cfg = PipelineConfig::load(&out.pipeline).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.status, RunStatus::Ok, "{:?}", report.error);
    assert_eq!(report.count("events"), 0);
    let events: Vec<EventAbstraction> = load_live(cfg.out_path("events.jsonl")).unwrap();
    assert!(events.is_empty());
    assert!(report.count("spikes") > 0);
    assert_eq!(std::fs::read_to_string(cfg.out_path("matches.jsonl")).unwrap(), "");
}
