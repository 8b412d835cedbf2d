//! Spike-to-event matching, coverage and lead-time statistics.

mod features;

pub use features::{export_features, write_features_csv, FeatureConfig, FeatureRow, NetworkRegion, RegionMap, FEATURE_COLUMNS};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{EventAbstraction, SpikeRecord};

pub const DEFAULT_WINDOW_HOURS: f64 = 6.0;
pub const DEFAULT_MIN_NOTICE_MINUTES: f64 = 60.0;
pub const OTHERS: &str = "Others";
pub const UNCATEGORIZED: &str = "Uncategorized";

#[derive(Debug, thiserror::Error)]
pub enum CorrelationError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("feature CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature CSV: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub window_hours: f64,
    /// An event must have been mentioned at least this long before the
    /// spike starts; `None` disables the check.
    pub min_notice_minutes: Option<f64>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { window_hours: DEFAULT_WINDOW_HOURS, min_notice_minutes: Some(DEFAULT_MIN_NOTICE_MINUTES) }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), CorrelationError> {
        if !(self.window_hours > 0.0 && self.window_hours.is_finite()) {
            return Err(CorrelationError::Config(format!("window_hours {} must be positive", self.window_hours)));
        }
        if let Some(n) = self.min_notice_minutes {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(CorrelationError::Config(format!("min_notice_minutes {n} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEventMatch {
    pub spike: SpikeRecord,
    pub event_id: String,
    /// Spike start minus event time.
    pub time_offset_minutes: f64,
    pub match_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEvent {
    pub event_id: String,
    pub reason: String,
}

fn minutes(d: Duration) -> f64 {
    d.num_milliseconds() as f64 / 60_000.0
}

fn hours(h: f64) -> Duration {
    Duration::milliseconds((h * 3_600_000.0).round() as i64)
}

/// The interval an event can explain:
/// `[t - window, t + max(spike_duration, window)]`.
pub fn match_interval(event_time: DateTime<Utc>, spike_duration_hours: Option<f64>, window_hours: f64) -> (DateTime<Utc>, DateTime<Utc>) {
    let after = spike_duration_hours.unwrap_or(0.0).max(window_hours);
    (event_time - hours(window_hours), event_time + hours(after))
}

/// Whether `event` may explain `spike` under `config` (interval overlap plus
/// the notice requirement).
pub fn is_match(spike: &SpikeRecord, event: &EventAbstraction, event_time: DateTime<Utc>, config: &MatchConfig) -> bool {
    let (lo, hi) = match_interval(event_time, event.spike_duration_hours, config.window_hours);
    let overlaps = spike.start <= hi && spike.end >= lo;
    let noticed = config.min_notice_minutes.is_none_or(|n| minutes(spike.start - event.first_mentioned_at) >= n);
    overlaps && noticed
}

/// All (spike, event) pairs that match.
///
/// Output is ordered by spike (network, start) and, within a spike, by
/// |offset|, then likelihood (higher first), then event id. Events without a
/// UTC time are returned as skipped.
pub fn match_spikes_to_events(
    spikes: &[SpikeRecord],
    events: &[EventAbstraction],
    config: &MatchConfig,
) -> Result<(Vec<SpikeEventMatch>, Vec<SkippedEvent>), CorrelationError> {
    config.validate()?;
    let mut timed = Vec::with_capacity(events.len());
    let mut skipped = Vec::new();
    for e in events {
        match e.event_time_utc {
            Some(t) => timed.push((e, t)),
            None => {
                log::warn!("event {} has no derivable UTC time; excluded from matching", e.event_id);
                skipped.push(SkippedEvent { event_id: e.event_id.clone(), reason: "no derivable UTC time".into() });
            }
        }
    }
    let mut ordered: Vec<&SpikeRecord> = spikes.iter().collect();
    ordered.sort_by(|a, b| (&a.network_id, a.start, &a.spike_id).cmp(&(&b.network_id, b.start, &b.spike_id)));
    let mut out = Vec::new();
    for s in ordered {
        let mut found: Vec<(f64, u8, &str, f64)> = Vec::new();
        for (e, t) in &timed {
            if is_match(s, e, *t, config) {
                let offset = minutes(s.start - *t);
                let span = (config.window_hours + e.spike_duration_hours.unwrap_or(0.0).max(config.window_hours)) * 60.0;
                let score = (1.0 - offset.abs() / span).clamp(0.0, 1.0);
                found.push((offset, e.likelihood.unwrap_or(0), &e.event_id, score));
            }
        }
        found.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(b.1.cmp(&a.1)).then(a.2.cmp(b.2)));
        out.extend(found.into_iter().map(|(offset, _, id, score)| SpikeEventMatch {
            spike: s.clone(),
            event_id: id.to_string(),
            time_offset_minutes: offset,
            match_score: score,
        }));
    }
    Ok((out, skipped))
}

/// A detected spike with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSpike {
    pub spike: SpikeRecord,
    pub event_driven: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCoverage {
    pub network_id: String,
    pub labeled: usize,
    pub matched: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub networks: Vec<NetworkCoverage>,
    pub overall: Option<NetworkCoverage>,
    pub notes: Vec<String>,
}

/// Fraction of event-driven spikes with at least one match, per network and
/// overall. Networks without event-driven spikes are omitted with a note.
pub fn coverage(labeled: &[LabeledSpike], matches: &[SpikeEventMatch]) -> CoverageReport {
    let matched_ids: BTreeSet<&str> = matches.iter().map(|m| m.spike.spike_id.as_str()).collect();
    let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut seen_networks = BTreeSet::new();
    for l in labeled {
        seen_networks.insert(l.spike.network_id.as_str());
        if l.event_driven {
            let entry = per.entry(&l.spike.network_id).or_default();
            entry.0 += 1;
            entry.1 += usize::from(matched_ids.contains(l.spike.spike_id.as_str()));
        }
    }
    let row = |id: &str, (n, m): (usize, usize)| NetworkCoverage { network_id: id.to_string(), labeled: n, matched: m, coverage: m as f64 / n as f64 };
    let networks: Vec<NetworkCoverage> = per.iter().map(|(id, c)| row(id, *c)).collect();
    let notes = seen_networks
        .into_iter()
        .filter(|n| !per.contains_key(n))
        .map(|n| format!("network {n} has no event-driven labeled spikes"))
        .collect();
    let total = per.values().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    let overall = (total.0 > 0).then(|| row("overall", total));
    CoverageReport { networks, overall, notes }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub lead_days: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCdf {
    pub category: String,
    pub count: usize,
    pub points: Vec<CdfPoint>,
}

impl CategoryCdf {
    /// Empirical CDF over distinct values; the last point is 1.0.
    pub fn from_leads(category: impl Into<String>, leads_days: &[f64]) -> Self {
        let mut v = leads_days.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mut points: Vec<CdfPoint> = Vec::new();
        for (i, x) in v.iter().enumerate() {
            let fraction = (i + 1) as f64 / n as f64;
            match points.last_mut() {
                Some(p) if p.lead_days == *x => p.fraction = fraction,
                _ => points.push(CdfPoint { lead_days: *x, fraction }),
            }
        }
        Self { category: category.into(), count: n, points }
    }

    /// Fraction of events mentioned at least `lead_days` ahead.
    pub fn fraction_at_least(&self, lead_days: f64) -> f64 {
        let below = self.points.iter().take_while(|p| p.lead_days < lead_days).last().map_or(0.0, |p| p.fraction);
        1.0 - below
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeadTimeConfig {
    pub bucket_categories: bool,
    /// Categories with fewer events are pooled into "Others".
    pub min_category_count: usize,
}

impl Default for LeadTimeConfig {
    fn default() -> Self {
        Self { bucket_categories: true, min_category_count: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeReport {
    pub categories: Vec<CategoryCdf>,
    /// Events first mentioned after they happened.
    pub negative: Option<CategoryCdf>,
    pub untimed: usize,
}

impl LeadTimeReport {
    pub fn category(&self, name: &str) -> Option<&CategoryCdf> {
        self.categories.iter().find(|c| c.category == name)
    }
}

/// Lead time of an event in days: event time minus first mention.
pub fn lead_days(event: &EventAbstraction) -> Option<f64> {
    event.event_time_utc.map(|t| minutes(t - event.first_mentioned_at) / (24.0 * 60.0))
}

/// Per-category empirical CDFs of lead time. "Others", if present, comes
/// last; other categories are in name order.
pub fn lead_time_cdf(events: &[EventAbstraction], config: &LeadTimeConfig) -> LeadTimeReport {
    let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut negative = Vec::new();
    let mut untimed = 0;
    for e in events {
        let Some(lead) = lead_days(e) else {
            untimed += 1;
            continue;
        };
        if lead < 0.0 {
            negative.push(lead);
            continue;
        }
        let cat = if config.bucket_categories {
            e.category.as_deref().map(str::trim).filter(|c| !c.is_empty()).unwrap_or(UNCATEGORIZED).to_string()
        } else {
            "All".to_string()
        };
        by_cat.entry(cat).or_default().push(lead);
    }
    let mut categories = Vec::new();
    let mut others = Vec::new();
    for (cat, leads) in by_cat {
        if config.bucket_categories && (leads.len() < config.min_category_count || cat == OTHERS) {
            others.extend(leads);
        } else {
            categories.push(CategoryCdf::from_leads(cat, &leads));
        }
    }
    if !others.is_empty() {
        categories.push(CategoryCdf::from_leads(OTHERS, &others));
    }
    let negative = (!negative.is_empty()).then(|| CategoryCdf::from_leads("negative", &negative));
    LeadTimeReport { categories, negative, untimed }
}
