//! Context-unaware traffic baseline and residual spike extraction.
//!
//! The baseline is a per-(weekday, time-of-day bin) mean and standard
//! deviation over the trailing weeks of history. Scoring a series against it
//! gives a Z-series; spikes are maximal runs of high Z that survive gap
//! merging and a minimum-duration filter.

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{InvariantViolation, SpikeRecord, TrafficSeries};

/// Absolute lower bound on the scoring denominator.
pub const STD_FLOOR_ABS: f64 = 1e-6;
pub const DEFAULT_STD_FLOOR_FRACTION: f64 = 0.05;
pub const DEFAULT_BIN_MINUTES: u32 = 5;
pub const DEFAULT_WINDOW_WEEKS: u32 = 4;

const MINUTES_PER_DAY: u32 = 1440;
const WEEK_SECONDS: i64 = 7 * 86_400;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("series covers {span_minutes} minutes; at least one full week is required")]
    InsufficientHistory { span_minutes: i64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("baseline has no data for {} slot(s): {}", .0.len(), format_slots(.0))]
    UnpopulatedSlots(Vec<Slot>),
    #[error("baseline is for network `{model}` but series is `{series}`")]
    NetworkMismatch { model: String, series: String },
    #[error(transparent)]
    Series(#[from] InvariantViolation),
}

fn format_slots(slots: &[Slot]) -> String {
    let shown: Vec<String> = slots.iter().take(8).map(|s| format!("(weekday {}, bin {})", s.weekday, s.bin)).collect();
    let more = if slots.len() > 8 { format!(" and {} more", slots.len() - 8) } else { String::new() };
    format!("{}{more}", shown.join(", "))
}

/// A (weekday, bin-of-day) position in the weekly cycle. Weekday 0 is Monday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub weekday: u8,
    pub bin: u16,
}

impl Slot {
    pub fn of(ts: DateTime<Utc>, bin_minutes: u32) -> Self {
        let minute = ts.hour() * 60 + ts.minute();
        Self { weekday: ts.weekday().num_days_from_monday() as u8, bin: (minute / bin_minutes) as u16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub mean: f64,
    pub std: f64,
    pub count: u64,
}

/// Seasonal baseline for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub network_id: String,
    pub bin_minutes: u32,
    pub window_weeks: u32,
    /// Indexed by `weekday * bins_per_day + bin`; `None` = unpopulated.
    pub stats: Vec<Option<SlotStats>>,
}

impl BaselineModel {
    pub fn bins_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.bin_minutes) as usize
    }

    pub fn slot_stats(&self, slot: Slot) -> Option<&SlotStats> {
        self.stats.get(slot.weekday as usize * self.bins_per_day() + slot.bin as usize)?.as_ref()
    }

    pub fn stats_at(&self, ts: DateTime<Utc>) -> Option<&SlotStats> {
        self.slot_stats(Slot::of(ts, self.bin_minutes))
    }

    pub fn populated_slots(&self) -> usize {
        self.stats.iter().filter(|s| s.is_some()).count()
    }

    /// Z-score of one sample, or `None` when its slot is unpopulated.
    pub fn score(&self, value: f64, ts: DateTime<Utc>, std_floor_fraction: f64) -> Option<f64> {
        let s = self.stats_at(ts)?;
        Some((value - s.mean) / scale(s, std_floor_fraction))
    }
}

/// Denominator used when scoring against a slot.
pub fn scale(stats: &SlotStats, std_floor_fraction: f64) -> f64 {
    stats.std.max(std_floor_fraction * stats.mean).max(STD_FLOOR_ABS)
}

fn check_bin_minutes(bin_minutes: u32) -> Result<(), BaselineError> {
    if bin_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(bin_minutes) {
        return Err(BaselineError::Config(format!("bin_minutes {bin_minutes} must divide 1440")));
    }
    Ok(())
}

/// Fits the weekly baseline over the trailing `window_weeks` of `series`.
pub fn fit_baseline(series: &TrafficSeries, window_weeks: u32, bin_minutes: u32) -> Result<BaselineModel, BaselineError> {
    series.validate()?;
    check_bin_minutes(bin_minutes)?;
    if window_weeks == 0 {
        return Err(BaselineError::Config("window_weeks must be at least 1".into()));
    }
    let span = series.end() - series.start;
    if span.num_seconds() < WEEK_SECONDS {
        return Err(BaselineError::InsufficientHistory { span_minutes: span.num_minutes() });
    }

    let window_start = series.end() - Duration::seconds(WEEK_SECONDS * window_weeks as i64);
    let bins_per_day = (MINUTES_PER_DAY / bin_minutes) as usize;
    // Welford accumulators: (count, mean, m2).
    let mut acc = vec![(0u64, 0.0f64, 0.0f64); 7 * bins_per_day];
    for (i, v) in series.values.iter().enumerate() {
        let Some(x) = *v else { continue };
        let ts = series.timestamp(i);
        if ts < window_start {
            continue;
        }
        let slot = Slot::of(ts, bin_minutes);
        let (n, mean, m2) = &mut acc[slot.weekday as usize * bins_per_day + slot.bin as usize];
        *n += 1;
        let delta = x - *mean;
        *mean += delta / *n as f64;
        *m2 += delta * (x - *mean);
    }
    let stats = acc
        .into_iter()
        .map(|(n, mean, m2)| (n > 0).then(|| SlotStats { mean, std: (m2 / n as f64).max(0.0).sqrt(), count: n }))
        .collect();
    Ok(BaselineModel { network_id: series.network_id.clone(), bin_minutes, window_weeks, stats })
}

/// Per-sample Z-scores aligned with a scored [`TrafficSeries`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZSeries {
    pub network_id: String,
    pub start: DateTime<Utc>,
    pub step: u32,
    /// `None` where the input sample was missing.
    pub z_values: Vec<Option<f64>>,
}

impl ZSeries {
    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step as i64 * index as i64)
    }

    pub fn step_minutes(&self) -> f64 {
        self.step as f64 / 60.0
    }

    /// Largest Z in `[from, to)`, if any sample falls there.
    pub fn max_in(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Option<f64> {
        let step = self.step as i64;
        let lo = ((from - self.start).num_seconds().max(0) + step - 1) / step;
        let hi = ((to - self.start).num_seconds().max(0) + step - 1) / step;
        let hi = (hi as usize).min(self.z_values.len());
        let lo = (lo as usize).min(hi);
        self.z_values[lo..hi].iter().flatten().copied().fold(None, |m, z| Some(m.map_or(z, |m: f64| m.max(z))))
    }
}

/// Scores `series` against `model`.
///
/// `z = (x - mean) / max(std, std_floor_fraction * mean, 1e-6)` per sample.
pub fn zscore_series(model: &BaselineModel, series: &TrafficSeries, std_floor_fraction: f64) -> Result<ZSeries, BaselineError> {
    series.validate()?;
    if model.network_id != series.network_id {
        return Err(BaselineError::NetworkMismatch { model: model.network_id.clone(), series: series.network_id.clone() });
    }
    if !(std_floor_fraction >= 0.0 && std_floor_fraction.is_finite()) {
        return Err(BaselineError::Config(format!("std_floor_fraction {std_floor_fraction} must be finite and >= 0")));
    }
    let mut missing = Vec::new();
    let mut z_values = Vec::with_capacity(series.len());
    for (i, v) in series.values.iter().enumerate() {
        let z = match v {
            Some(x) => {
                let ts = series.timestamp(i);
                match model.score(*x, ts, std_floor_fraction) {
                    Some(z) => Some(z),
                    None => {
                        missing.push(Slot::of(ts, model.bin_minutes));
                        None
                    }
                }
            }
            None => None,
        };
        z_values.push(z);
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(BaselineError::UnpopulatedSlots(missing));
    }
    Ok(ZSeries { network_id: series.network_id.clone(), start: series.start, step: series.step, z_values })
}

/// Scores each week against a baseline fitted on the preceding weeks only.
///
/// Week `w` (counted from the series start) is scored with a model fitted on
/// weeks `max(0, w - window_weeks) .. w`. The first week has no history and
/// stays unscored, as do samples whose slot had no history.
pub fn score_rolling(
    series: &TrafficSeries,
    window_weeks: u32,
    bin_minutes: u32,
    std_floor_fraction: f64,
) -> Result<ZSeries, BaselineError> {
    series.validate()?;
    check_bin_minutes(bin_minutes)?;
    if window_weeks == 0 {
        return Err(BaselineError::Config("window_weeks must be at least 1".into()));
    }
    let per_week = (WEEK_SECONDS / series.step as i64) as usize;
    if WEEK_SECONDS % series.step as i64 != 0 || per_week == 0 {
        return Err(BaselineError::Config(format!("step {}s does not divide a week", series.step)));
    }
    let mut z_values = vec![None; series.len()];
    let mut week = 1usize;
    while week * per_week < series.len() {
        let hist_from = week.saturating_sub(window_weeks as usize) * per_week;
        let history = TrafficSeries {
            network_id: series.network_id.clone(),
            start: series.timestamp(hist_from),
            step: series.step,
            values: series.values[hist_from..week * per_week].to_vec(),
        };
        if history.values.iter().any(Option::is_some) {
            let model = fit_baseline(&history, window_weeks, bin_minutes)?;
            let to = ((week + 1) * per_week).min(series.len());
            for i in week * per_week..to {
                if let Some(x) = series.values[i] {
                    z_values[i] = model.score(x, series.timestamp(i), std_floor_fraction);
                }
            }
        }
        week += 1;
    }
    Ok(ZSeries { network_id: series.network_id.clone(), start: series.start, step: series.step, z_values })
}

/// Spike extraction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub z_threshold: f64,
    pub min_duration_minutes: f64,
    pub merge_gap_minutes: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { z_threshold: 2.0, min_duration_minutes: 20.0, merge_gap_minutes: 5.0 }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.z_threshold > 0.0 && self.z_threshold.is_finite()) {
            return Err(BaselineError::Config(format!("z_threshold {} must be positive", self.z_threshold)));
        }
        if !(self.min_duration_minutes > 0.0 && self.min_duration_minutes.is_finite()) {
            return Err(BaselineError::Config(format!("min_duration_minutes {} must be positive", self.min_duration_minutes)));
        }
        if !(self.merge_gap_minutes >= 0.0 && self.merge_gap_minutes.is_finite()) {
            return Err(BaselineError::Config(format!("merge_gap_minutes {} must be >= 0", self.merge_gap_minutes)));
        }
        Ok(())
    }
}

/// Extracts spikes from a Z-series.
///
/// A spike is a maximal run of samples with `z >= z_threshold`. Adjacent runs
/// whose separating gap is shorter than `merge_gap_minutes` and contains no
/// missing sample are merged. Runs shorter than `min_duration_minutes` are
/// dropped. Peak and mean Z are taken over the above-threshold samples only.
pub fn detect_spikes(z: &ZSeries, config: &DetectionConfig) -> Result<Vec<SpikeRecord>, BaselineError> {
    config.validate()?;
    if let Some(i) = z.z_values.iter().position(|v| v.is_some_and(|v| !v.is_finite())) {
        return Err(BaselineError::Series(InvariantViolation::new("z_values", format!("sample {i} is not finite"))));
    }
    let step_min = z.step_minutes();
    let mut spikes = Vec::new();
    // Current merged run: [start, end) and its above-threshold samples.
    let mut open: Option<Run> = None;
    // Sub-threshold samples seen since the open run last ended.
    let mut gap = 0usize;

    for (i, v) in z.z_values.iter().enumerate() {
        match v {
            Some(zv) if *zv >= config.z_threshold => {
                match &mut open {
                    Some(run) if gap == 0 || (gap as f64) * step_min < config.merge_gap_minutes => run.extend(i, *zv),
                    _ => {
                        if let Some(run) = open.take() {
                            push_spike(&mut spikes, z, run, config);
                        }
                        open = Some(Run::new(i, *zv));
                    }
                }
                gap = 0;
            }
            Some(_) => {
                if open.is_some() {
                    gap += 1;
                    if (gap as f64) * step_min >= config.merge_gap_minutes {
                        push_spike(&mut spikes, z, open.take().unwrap(), config);
                        gap = 0;
                    }
                }
            }
            None => {
                if let Some(run) = open.take() {
                    push_spike(&mut spikes, z, run, config);
                }
                gap = 0;
            }
        }
    }
    if let Some(run) = open {
        push_spike(&mut spikes, z, run, config);
    }
    Ok(spikes)
}

struct Run {
    first: usize,
    last: usize,
    peak: f64,
    sum: f64,
    count: usize,
}

impl Run {
    fn new(i: usize, z: f64) -> Self {
        Self { first: i, last: i, peak: z, sum: z, count: 1 }
    }

    fn extend(&mut self, i: usize, z: f64) {
        self.last = i;
        self.peak = self.peak.max(z);
        self.sum += z;
        self.count += 1;
    }
}

fn push_spike(out: &mut Vec<SpikeRecord>, z: &ZSeries, run: Run, config: &DetectionConfig) {
    let duration = (run.last - run.first + 1) as f64 * z.step_minutes();
    if duration < config.min_duration_minutes {
        return;
    }
    let start = z.timestamp(run.first);
    out.push(SpikeRecord {
        spike_id: spike_id(&z.network_id, start),
        network_id: z.network_id.clone(),
        start,
        end: z.timestamp(run.last + 1),
        peak_z: run.peak,
        mean_z: run.sum / run.count as f64,
        duration_minutes: duration,
    });
}

/// Stable identifier of a spike: network plus start instant.
pub fn spike_id(network_id: &str, start: DateTime<Utc>) -> String {
    format!("{network_id}@{}", start.format("%Y%m%dT%H%M%SZ"))
}

/// Counts spikes with `peak_z >= t` for each threshold `t`.
pub fn spike_frequency(spikes: &[SpikeRecord], z_bins: &[f64]) -> Result<Vec<(f64, usize)>, BaselineError> {
    if z_bins.is_empty() {
        return Err(BaselineError::Config("z_bins must not be empty".into()));
    }
    if z_bins.windows(2).any(|w| !(w[0] < w[1])) || z_bins.iter().any(|b| !b.is_finite()) {
        return Err(BaselineError::Config("z_bins must be finite and strictly increasing".into()));
    }
    let mut peaks: Vec<f64> = spikes.iter().map(|s| s.peak_z).collect();
    peaks.sort_by(f64::total_cmp);
    Ok(z_bins
        .iter()
        .map(|&t| {
            let below = peaks.partition_point(|p| *p < t);
            (t, peaks.len() - below)
        })
        .collect())
}
