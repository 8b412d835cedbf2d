//! Coverage against planted truth and tabular report writers.

use std::collections::BTreeSet;
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::synth::PlantLabel;
use crate::correlation::{coverage, CorrelationError, CoverageReport, LabeledSpike, LeadTimeReport, SpikeEventMatch};
use crate::model::{EventAbstraction, SpikeRecord};

/// What happened to one planted event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantOutcome {
    pub key: String,
    pub network_id: String,
    pub start: DateTime<Utc>,
    pub spontaneous: bool,
    pub sub_threshold: bool,
    /// Spikes overlapping the planted interval.
    pub spikes: Vec<String>,
    /// Events matched to those spikes.
    pub matched_events: Vec<String>,
    /// Some matched event is timed exactly at the plant.
    pub matched_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    /// Non-spontaneous plants meant to be detectable.
    pub eligible: usize,
    pub detected: usize,
    pub matched: usize,
    /// `matched / eligible`.
    pub coverage: Option<f64>,
    pub spontaneous: usize,
    pub spontaneous_matched: usize,
    /// Spikes overlapping no plant.
    pub unexplained_spikes: usize,
    /// Spike-level coverage with spikes labeled by plant overlap.
    pub spikes: CoverageReport,
    pub plants: Vec<PlantOutcome>,
}

/// Scores detection and matching against planted ground truth.
pub fn coverage_summary(
    plants: &[PlantLabel],
    spikes: &[SpikeRecord],
    matches: &[SpikeEventMatch],
    events: &[EventAbstraction],
) -> CoverageSummary {
    let eligible_plant = |p: &PlantLabel| !p.spontaneous && !p.sub_threshold;
    let overlaps = |s: &SpikeRecord, p: &PlantLabel| s.network_id == p.network_id && s.start < p.end && s.end > p.start;
    let mut outcomes = Vec::with_capacity(plants.len());
    for p in plants {
        let hit: Vec<&SpikeRecord> = spikes.iter().filter(|s| overlaps(s, p)).collect();
        let hit_ids: BTreeSet<&str> = hit.iter().map(|s| s.spike_id.as_str()).collect();
        let mut matched: Vec<String> =
            matches.iter().filter(|m| hit_ids.contains(m.spike.spike_id.as_str())).map(|m| m.event_id.clone()).collect();
        matched.sort();
        matched.dedup();
        let matched_correct = matched.iter().any(|id| events.iter().any(|e| &e.event_id == id && e.event_time_utc == Some(p.start)));
        outcomes.push(PlantOutcome {
            key: p.key.clone(),
            network_id: p.network_id.clone(),
            start: p.start,
            spontaneous: p.spontaneous,
            sub_threshold: p.sub_threshold,
            spikes: hit.iter().map(|s| s.spike_id.clone()).collect(),
            matched_events: matched,
            matched_correct,
        });
    }
    let labeled: Vec<LabeledSpike> = spikes
        .iter()
        .map(|s| LabeledSpike { spike: s.clone(), event_driven: plants.iter().any(|p| eligible_plant(p) && overlaps(s, p)) })
        .collect();
    let unexplained_spikes = spikes.iter().filter(|s| !plants.iter().any(|p| overlaps(s, p))).count();
    let eligible: Vec<&PlantOutcome> = outcomes.iter().filter(|o| !o.spontaneous && !o.sub_threshold).collect();
    let matched = eligible.iter().filter(|o| o.matched_correct).count();
    CoverageSummary {
        eligible: eligible.len(),
        detected: eligible.iter().filter(|o| !o.spikes.is_empty()).count(),
        matched,
        coverage: (!eligible.is_empty()).then(|| matched as f64 / eligible.len() as f64),
        spontaneous: outcomes.iter().filter(|o| o.spontaneous).count(),
        spontaneous_matched: outcomes.iter().filter(|o| o.spontaneous && !o.matched_events.is_empty()).count(),
        unexplained_spikes,
        spikes: coverage(&labeled, matches),
        plants: outcomes,
    }
}

/// `network_id,labeled,matched,coverage`, one row per network then `overall`.
pub fn write_coverage_csv<W: Write>(writer: W, report: &CoverageReport) -> Result<(), CorrelationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["network_id", "labeled", "matched", "coverage"])?;
    for n in report.networks.iter().chain(&report.overall) {
        w.write_record([n.network_id.clone(), n.labeled.to_string(), n.matched.to_string(), n.coverage.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `category,count,lead_days,fraction`; the negative bucket is labeled
/// `negative`.
pub fn write_lead_time_csv<W: Write>(writer: W, report: &LeadTimeReport) -> Result<(), CorrelationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["category", "count", "lead_days", "fraction"])?;
    for c in report.categories.iter().chain(&report.negative) {
        for p in &c.points {
            w.write_record([c.category.clone(), c.count.to_string(), p.lead_days.to_string(), p.fraction.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_spike_frequency_csv<W: Write>(writer: W, rows: &[(f64, usize)]) -> Result<(), CorrelationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["z_threshold", "spike_count"])?;
    for (z, n) in rows {
        w.write_record([z.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::CategoryCdf;
    use chrono::{Duration, TimeZone};

    fn spike(net: &str, start: DateTime<Utc>, minutes: i64) -> SpikeRecord {
        SpikeRecord {
            spike_id: crate::baseline::spike_id(net, start),
            network_id: net.into(),
            start,
            end: start + Duration::minutes(minutes),
            peak_z: 4.0,
            mean_z: 3.0,
            duration_minutes: minutes as f64,
        }
    }

    #[test]
    fn summary_counts() {
        let t = Utc.with_ymd_and_hms(2025, 3, 10, 20, 0, 0).unwrap();
        let plant = |key: &str, start, spontaneous| PlantLabel {
            key: key.into(),
            network_id: "n".into(),
            start,
            end: start + Duration::hours(1),
            magnitude_z: 5.0,
            category: "Sports".into(),
            spontaneous,
            sub_threshold: false,
        };
        let plants = vec![plant("a", t, false), plant("b", t + Duration::days(1), false), plant("c", t + Duration::days(2), true)];
        let spikes = vec![spike("n", t, 60), spike("n", t + Duration::days(2), 60), spike("n", t + Duration::days(5), 30)];
        let mut ev = EventAbstraction::new("2025-03-10", "20:00", "x", "rec-1", t - Duration::days(3));
        ev.event_id = "evt-a".into();
        ev.event_time_utc = Some(t);
        let matches = vec![SpikeEventMatch { spike: spikes[0].clone(), event_id: "evt-a".into(), time_offset_minutes: 0.0, match_score: 1.0 }];
        let s = coverage_summary(&plants, &spikes, &matches, &[ev]);
        assert_eq!((s.eligible, s.detected, s.matched), (2, 1, 1));
        assert_eq!(s.coverage, Some(0.5));
        assert_eq!((s.spontaneous, s.spontaneous_matched), (1, 0));
        assert_eq!(s.unexplained_spikes, 1);
        assert_eq!(s.spikes.overall.as_ref().unwrap().labeled, 1);
    }

    #[test]
    fn csv_writers() {
        let report = LeadTimeReport {
            categories: vec![CategoryCdf::from_leads("Sports", &[1.0, 2.0])],
            negative: Some(CategoryCdf::from_leads("negative", &[-0.5])),
            untimed: 0,
        };
        let mut buf = Vec::new();
        write_lead_time_csv(&mut buf, &report).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "category,count,lead_days,fraction\nSports,2,1,0.5\nSports,2,2,1\nnegative,1,-0.5,1\n"
        );
        let mut buf = Vec::new();
        write_spike_frequency_csv(&mut buf, &[(2.0, 5), (3.5, 1)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "z_threshold,spike_count\n2,5\n3.5,1\n");
    }
}
