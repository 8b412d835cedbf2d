//! Shared domain types.
//!
//! Every type here is an immutable value once constructed; pipeline stages
//! exchange them through the JSON-lines files in [`crate::store`].

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

/// Schema version stamped on every persisted line.
pub const SCHEMA_VERSION: u32 = 1;

/// Time-of-day marker used when the source gives no time.
pub const UNKNOWN_TIME: &str = "unknown";

/// A single failed invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid `{field}`: {message}")]
pub struct InvariantViolation {
    pub field: &'static str,
    pub message: String,
}

impl InvariantViolation {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self { field, message: message.into() }
    }
}

fn ensure(cond: bool, field: &'static str, message: impl FnOnce() -> String) -> Result<(), InvariantViolation> {
    if cond {
        Ok(())
    } else {
        Err(InvariantViolation::new(field, message()))
    }
}

/// Uniformly sampled throughput of one network.
///
/// Missing samples are `None`; they are skipped when fitting a baseline and
/// break contiguity when detecting spikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSeries {
    pub network_id: String,
    pub start: DateTime<Utc>,
    /// Sampling interval in seconds.
    pub step: u32,
    pub values: Vec<Option<f64>>,
}

impl TrafficSeries {
    pub fn new(
        network_id: impl Into<String>,
        start: DateTime<Utc>,
        step: u32,
        values: Vec<Option<f64>>,
    ) -> Result<Self, InvariantViolation> {
        let series = Self { network_id: network_id.into(), start, step, values };
        series.validate()?;
        Ok(series)
    }

    /// Builds a series with no missing samples.
    pub fn dense(
        network_id: impl Into<String>,
        start: DateTime<Utc>,
        step: u32,
        values: Vec<f64>,
    ) -> Result<Self, InvariantViolation> {
        Self::new(network_id, start, step, values.into_iter().map(Some).collect())
    }

    pub fn validate(&self) -> Result<(), InvariantViolation> {
        ensure(self.step > 0, "step", || "step must be positive".into())?;
        ensure(!self.values.is_empty(), "values", || "series is empty".into())?;
        ensure(self.values.iter().any(Option::is_some), "values", || "series has no samples".into())?;
        for (i, v) in self.values.iter().enumerate() {
            if let Some(v) = v {
                ensure(v.is_finite() && *v >= 0.0, "values", || format!("sample {i} is {v}, expected finite and >= 0"))?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step as i64 * index as i64)
    }

    /// Timestamp one step past the last sample.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.values.len())
    }

    pub fn step_minutes(&self) -> f64 {
        self.step as f64 / 60.0
    }
}

/// A contiguous anomalous interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    #[serde(default)]
    pub spike_id: String,
    pub network_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub peak_z: f64,
    pub mean_z: f64,
    pub duration_minutes: f64,
}

impl SpikeRecord {
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        ensure(self.end > self.start, "end", || "end must be after start".into())?;
        let minutes = (self.end - self.start).num_seconds() as f64 / 60.0;
        ensure((minutes - self.duration_minutes).abs() < 1e-9, "duration_minutes", || {
            format!("{} does not match interval length {minutes}", self.duration_minutes)
        })?;
        ensure(self.peak_z.is_finite() && self.mean_z.is_finite(), "peak_z", || "z values must be finite".into())?;
        ensure(self.peak_z >= self.mean_z, "peak_z", || format!("peak {} below mean {}", self.peak_z, self.mean_z))?;
        Ok(())
    }

    /// Checks the detection-rule invariants on top of [`Self::validate`].
    pub fn validate_against(&self, z_threshold: f64, min_duration_minutes: f64) -> Result<(), InvariantViolation> {
        self.validate()?;
        ensure(self.mean_z >= z_threshold, "mean_z", || format!("{} below threshold {z_threshold}", self.mean_z))?;
        ensure(self.duration_minutes >= min_duration_minutes, "duration_minutes", || {
            format!("{} below minimum {min_duration_minutes}", self.duration_minutes)
        })
    }

    pub fn overlaps(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    ForumThread,
    LinkedPage,
    WikiArticle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedText {
    pub url: String,
    pub text: String,
}

/// One cleaned discussion thread: the unit of LLM input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentRecord {
    #[serde(default)]
    pub record_id: String,
    pub source: SourceKind,
    pub url: String,
    pub created_at: DateTime<Utc>,
    pub fetched_at: DateTime<Utc>,
    pub title: String,
    pub body_text: String,
    pub comments: Vec<String>,
    pub engagement: u64,
    pub linked_texts: Vec<LinkedText>,
}

impl ContentRecord {
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let has_text = !self.body_text.trim().is_empty()
            || self.comments.iter().any(|c| !c.trim().is_empty())
            || self.linked_texts.iter().any(|l| !l.text.trim().is_empty());
        ensure(has_text, "body_text", || "record has no text after cleaning".into())?;
        ensure(self.created_at <= self.fetched_at, "created_at", || {
            format!("created_at {} is after fetched_at {}", self.created_at, self.fetched_at)
        })
    }
}

/// Minimal event extracted from a content record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDraft {
    pub headline: String,
    pub date: String,
    pub time: String,
    pub source_record: String,
    /// Set when the event date precedes the record's creation date.
    #[serde(default)]
    pub in_past: bool,
}

impl EventDraft {
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        ensure(!self.headline.trim().is_empty(), "headline", || "headline is empty".into())?;
        parse_event_date(&self.date).map(|_| ())
    }
}

/// Per-granularity cluster assignment of one event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticSignature {
    pub levels: Vec<usize>,
    pub cluster_ids: Vec<usize>,
}

impl SemanticSignature {
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        ensure(self.levels.len() == self.cluster_ids.len(), "semantic_signature", || {
            format!("{} levels but {} cluster ids", self.levels.len(), self.cluster_ids.len())
        })?;
        for (k, id) in self.levels.iter().zip(&self.cluster_ids) {
            ensure(id < k, "semantic_signature", || format!("cluster id {id} out of range for k={k}"))?;
        }
        Ok(())
    }
}

/// Structured event with its metadata and provenance.
///
/// `date`, `time` and `description` are fixed on creation. The remaining
/// metadata starts unset and is filled by ensemble inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAbstraction {
    #[serde(default)]
    pub event_id: String,
    pub date: String,
    pub time: String,
    pub description: String,
    /// UTC instant derived from `date` and `time`.
    pub event_time_utc: Option<DateTime<Utc>>,
    pub category: Option<String>,
    pub entities: Option<Vec<String>>,
    pub platforms: Option<Vec<String>>,
    pub data_per_user_mb: Option<u64>,
    pub audience_size: Option<u64>,
    pub continent_relevance: Option<BTreeMap<String, f64>>,
    pub nation_relevance: Option<BTreeMap<String, f64>>,
    pub spike_duration_hours: Option<f64>,
    pub likelihood: Option<u8>,
    pub semantic_signature: Option<SemanticSignature>,
    pub source_records: Vec<String>,
    pub first_mentioned_at: DateTime<Utc>,
    #[serde(default)]
    pub merge_history: Vec<String>,
    /// Fields whose ensemble never reached consensus.
    #[serde(default)]
    pub low_confidence: Vec<String>,
    /// Fields awaiting re-inference after a merge.
    #[serde(default)]
    pub stale_fields: Vec<String>,
}

impl EventAbstraction {
    /// A fresh event with only the creation-time fields set.
    pub fn new(
        date: impl Into<String>,
        time: impl Into<String>,
        description: impl Into<String>,
        source_record: impl Into<String>,
        first_mentioned_at: DateTime<Utc>,
    ) -> Self {
        Self {
            event_id: String::new(),
            date: date.into(),
            time: time.into(),
            description: description.into(),
            event_time_utc: None,
            category: None,
            entities: None,
            platforms: None,
            data_per_user_mb: None,
            audience_size: None,
            continent_relevance: None,
            nation_relevance: None,
            spike_duration_hours: None,
            likelihood: None,
            semantic_signature: None,
            source_records: vec![source_record.into()],
            first_mentioned_at,
            merge_history: Vec::new(),
            low_confidence: Vec::new(),
            stale_fields: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), InvariantViolation> {
        parse_event_date(&self.date)?;
        ensure(!self.description.trim().is_empty(), "description", || "description is empty".into())?;
        ensure(!self.source_records.is_empty(), "source_records", || "no source records".into())?;
        if let Some(l) = self.likelihood {
            ensure(l <= 10, "likelihood", || format!("{l} outside [0, 10]"))?;
        }
        for (field, map) in [("continent_relevance", &self.continent_relevance), ("nation_relevance", &self.nation_relevance)] {
            if let Some(map) = map {
                for (key, v) in map {
                    ensure((0.0..=1.0).contains(v), field, || format!("{key} = {v} outside [0, 1]"))?;
                }
            }
        }
        if let Some(h) = self.spike_duration_hours {
            ensure(h.is_finite() && h >= 0.0, "spike_duration_hours", || format!("{h} is not a finite non-negative duration"))?;
        }
        if let Some(sig) = &self.semantic_signature {
            sig.validate()?;
        }
        Ok(())
    }

    /// Checks that `first_mentioned_at` is the earliest creation time among
    /// the given source records.
    pub fn validate_first_mention(&self, records: &[&ContentRecord]) -> Result<(), InvariantViolation> {
        let min = records
            .iter()
            .filter(|r| self.source_records.contains(&r.record_id))
            .map(|r| r.created_at)
            .min();
        ensure(min == Some(self.first_mentioned_at), "first_mentioned_at", || {
            format!("{} differs from earliest source mention {min:?}", self.first_mentioned_at)
        })
    }

    /// True once every LLM-inferred field holds a value.
    pub fn is_enriched(&self) -> bool {
        self.category.is_some()
            && self.entities.is_some()
            && self.platforms.is_some()
            && self.data_per_user_mb.is_some()
            && self.audience_size.is_some()
            && self.continent_relevance.is_some()
            && self.nation_relevance.is_some()
            && self.spike_duration_hours.is_some()
            && self.likelihood.is_some()
    }

    /// Canonical free-text summary used for embedding.
    pub fn summary_text(&self) -> String {
        let mut out = self.description.trim().to_string();
        if let Some(c) = &self.category {
            out.push_str(" | ");
            out.push_str(c.trim());
        }
        if let Some(e) = &self.entities {
            let mut e: Vec<&str> = e.iter().map(|s| s.trim()).collect();
            e.sort_unstable();
            out.push_str(" | ");
            out.push_str(&e.join(", "));
        }
        out
    }
}

/// A parsed value of one metadata field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum FieldValue {
    Text(String),
    TextList(Vec<String>),
    Integer(i64),
    Real(f64),
    RealMap(BTreeMap<String, f64>),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Text(s) => write!(f, "{s}"),
            FieldValue::TextList(v) => write!(f, "{}", v.join("; ")),
            FieldValue::Integer(i) => write!(f, "{i}"),
            FieldValue::Real(r) => write!(f, "{r}"),
            FieldValue::RealMap(m) => {
                let parts: Vec<String> = m.iter().map(|(k, v)| format!("{k}={v}")).collect();
                write!(f, "{}", parts.join("; "))
            }
        }
    }
}

/// Outcome of aggregating one ensemble attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "value")]
pub enum Consensus {
    Agreed(FieldValue),
    Failed,
}

impl Consensus {
    pub fn value(&self) -> Option<&FieldValue> {
        match self {
            Consensus::Agreed(v) => Some(v),
            Consensus::Failed => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, Consensus::Failed)
    }
}

/// One raw completion and its parse (`None` = abstain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub raw: String,
    pub parsed: Option<FieldValue>,
}

/// Full audit trail of inferring one field for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRun {
    pub event_id: String,
    pub field_name: String,
    /// One inner list per attempt, each of ensemble size.
    pub run_outputs: Vec<Vec<RunOutput>>,
    pub consensus_value: Consensus,
    pub attempts: u32,
}

impl InferenceRun {
    pub fn validate(&self, ensemble_size: usize) -> Result<(), InvariantViolation> {
        ensure(self.attempts >= 1, "attempts", || "at least one attempt is required".into())?;
        ensure(self.run_outputs.len() == self.attempts as usize, "run_outputs", || {
            format!("{} attempts recorded for {} attempts", self.run_outputs.len(), self.attempts)
        })?;
        for runs in &self.run_outputs {
            ensure(runs.len() == ensemble_size, "run_outputs", || {
                format!("attempt has {} runs, ensemble size is {ensemble_size}", runs.len())
            })?;
        }
        Ok(())
    }
}

/// Parses an ISO-8601 calendar date (`YYYY-MM-DD`).
pub fn parse_event_date(date: &str) -> Result<NaiveDate, InvariantViolation> {
    NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
        .map_err(|_| InvariantViolation::new("date", format!("`{date}` is not a valid YYYY-MM-DD date")))
}

/// Parses a time-of-day string, returning the local time and an explicit
/// UTC offset in minutes when the string carries one.
///
/// Accepts `HH:MM`, `HH:MM:SS`, `H am/pm`, `H:MM pm`, optionally followed by
/// `Z`, `UTC`, `GMT`, `UTC+2`, `+02:00` or `-0500`. `unknown` and
/// unparseable strings yield `None`.
pub fn parse_event_time(time: &str) -> Option<(NaiveTime, Option<i32>)> {
    let s = time.trim().to_ascii_lowercase();
    if s.is_empty() || s == UNKNOWN_TIME {
        return None;
    }
    let (clock, zone) = split_zone(&s);
    let offset = match zone.trim() {
        "" => None,
        z => Some(parse_offset(z)?),
    };
    Some((parse_clock(clock.trim())?, offset))
}

fn split_zone(s: &str) -> (&str, &str) {
    for marker in ["utc", "gmt", "z"] {
        if let Some(pos) = s.find(marker) {
            return (&s[..pos], &s[pos..]);
        }
    }
    // A sign after the clock part starts a numeric offset.
    if let Some(pos) = s.char_indices().skip(1).find(|(_, c)| *c == '+' || *c == '-').map(|(i, _)| i) {
        return (&s[..pos], &s[pos..]);
    }
    (s, "")
}

fn parse_offset(zone: &str) -> Option<i32> {
    let rest = zone
        .strip_prefix("utc")
        .or_else(|| zone.strip_prefix("gmt"))
        .or_else(|| zone.strip_prefix('z'))
        .unwrap_or(zone)
        .trim();
    if rest.is_empty() {
        return Some(0);
    }
    let (sign, digits) = match rest.as_bytes()[0] {
        b'+' => (1, &rest[1..]),
        b'-' => (-1, &rest[1..]),
        _ => return None,
    };
    let digits: String = digits.chars().filter(|c| *c != ':').collect();
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let (h, m) = match digits.len() {
        1 | 2 => (digits.parse::<i32>().ok()?, 0),
        3 | 4 => {
            let split = digits.len() - 2;
            (digits[..split].parse::<i32>().ok()?, digits[split..].parse::<i32>().ok()?)
        }
        _ => return None,
    };
    if h > 14 || m > 59 {
        return None;
    }
    Some(sign * (h * 60 + m))
}

fn parse_clock(clock: &str) -> Option<NaiveTime> {
    let (body, meridiem) = if let Some(b) = clock.strip_suffix("am") {
        (b.trim(), Some(false))
    } else if let Some(b) = clock.strip_suffix("pm") {
        (b.trim(), Some(true))
    } else {
        (clock, None)
    };
    let mut parts = body.split(':');
    let h: u32 = parts.next()?.trim().parse().ok()?;
    let m: u32 = parts.next().map(|p| p.trim().parse()).transpose().ok()?.unwrap_or(0);
    let s: u32 = parts.next().map(|p| p.trim().parse()).transpose().ok()?.unwrap_or(0);
    if parts.next().is_some() {
        return None;
    }
    if meridiem.is_none() && body.split(':').count() < 2 {
        return None;
    }
    let h = match meridiem {
        Some(pm) => {
            if !(1..=12).contains(&h) {
                return None;
            }
            (h % 12) + if pm { 12 } else { 0 }
        }
        None => h,
    };
    NaiveTime::from_hms_opt(h, m, s)
}

/// Derives the UTC instant of an event from its verbatim date and time.
///
/// Times without an explicit zone are read in `default_offset_minutes`;
/// an unknown time maps to 12:00 in that zone.
pub fn derive_event_time(date: &str, time: &str, default_offset_minutes: i32) -> Option<DateTime<Utc>> {
    let day = parse_event_date(date).ok()?;
    let (clock, offset) = parse_event_time(time).unwrap_or((NaiveTime::from_hms_opt(12, 0, 0)?, None));
    let offset = FixedOffset::east_opt(offset.unwrap_or(default_offset_minutes) * 60)?;
    offset.from_local_datetime(&day.and_time(clock)).single().map(|t| t.with_timezone(&Utc))
}
