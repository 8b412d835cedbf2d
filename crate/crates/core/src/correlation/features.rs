//! Forecaster feature windows around events.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::CorrelationError;
use crate::baseline::ZSeries;
use crate::model::{EventAbstraction, SpikeRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkRegion {
    /// ISO 3166-1 alpha-2 code, matched against nation relevance keys.
    pub country: String,
    /// Matched against continent relevance keys.
    pub continent: String,
}

/// Static network → region assignment.
pub type RegionMap = BTreeMap<String, NetworkRegion>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Total window length, centred on the event time.
    pub window_days: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { window_days: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub network_id: String,
    pub event_id: String,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub event_time_utc: DateTime<Utc>,
    pub date: String,
    pub time: String,
    pub description: String,
    pub category: Option<String>,
    pub entities: Option<Vec<String>>,
    pub platforms: Option<Vec<String>>,
    pub data_per_user_mb: Option<u64>,
    pub audience_size: Option<u64>,
    /// Relevance to the network's continent (0 when the event names others only).
    pub continent_relevance: Option<f64>,
    /// Relevance to the network's country.
    pub nation_relevance: Option<f64>,
    pub spike_duration_hours: Option<f64>,
    pub likelihood: Option<u8>,
    pub semantic_signature: Option<Vec<usize>>,
    /// Highest z-score observed in the window; absent for windows without data.
    pub target_peak_z: Option<f64>,
    pub spike_count: usize,
}

/// Fixed leading columns; `sig_level_<i>` columns follow, then the targets.
pub const FEATURE_COLUMNS: [&str; 17] = [
    "network_id",
    "event_id",
    "window_start",
    "window_end",
    "event_time_utc",
    "date",
    "time",
    "description",
    "category",
    "entities",
    "platforms",
    "data_per_user_mb",
    "audience_size",
    "continent_relevance",
    "nation_relevance",
    "spike_duration_hours",
    "likelihood",
];

fn relevance(map: &Option<BTreeMap<String, f64>>, key: Option<&str>) -> Option<f64> {
    let map = map.as_ref()?;
    let key = key?;
    Some(map.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map_or(0.0, |(_, v)| *v))
}

/// One row per (timed event, network). Networks are those of `regions` and
/// `traffic`; rows are ordered by event time, event id, network id.
pub fn export_features(
    events: &[EventAbstraction],
    spikes: &[SpikeRecord],
    traffic: &[ZSeries],
    regions: &RegionMap,
    config: &FeatureConfig,
) -> Result<Vec<FeatureRow>, CorrelationError> {
    if !(config.window_days > 0.0 && config.window_days.is_finite()) {
        return Err(CorrelationError::Config(format!("window_days {} must be positive", config.window_days)));
    }
    let half = Duration::milliseconds((config.window_days * 43_200_000.0).round() as i64);
    let networks: BTreeSet<&str> = regions.keys().map(String::as_str).chain(traffic.iter().map(|z| z.network_id.as_str())).collect();
    let by_net: BTreeMap<&str, &ZSeries> = traffic.iter().map(|z| (z.network_id.as_str(), z)).collect();
    let mut timed: Vec<(&EventAbstraction, DateTime<Utc>)> = Vec::new();
    for e in events {
        match e.event_time_utc {
            Some(t) => timed.push((e, t)),
            None => log::warn!("event {} has no UTC time; no feature rows", e.event_id),
        }
    }
    timed.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.event_id.cmp(&b.0.event_id)));
    let mut rows = Vec::with_capacity(timed.len() * networks.len());
    for (e, t) in timed {
        if e.semantic_signature.is_none() {
            log::warn!("event {} has no semantic signature; signature columns left empty", e.event_id);
        }
        let (start, end) = (t - half, t + half);
        for &net in &networks {
            let region = regions.get(net);
            rows.push(FeatureRow {
                network_id: net.to_string(),
                event_id: e.event_id.clone(),
                window_start: start,
                window_end: end,
                event_time_utc: t,
                date: e.date.clone(),
                time: e.time.clone(),
                description: e.description.clone(),
                category: e.category.clone(),
                entities: e.entities.clone(),
                platforms: e.platforms.clone(),
                data_per_user_mb: e.data_per_user_mb,
                audience_size: e.audience_size,
                continent_relevance: relevance(&e.continent_relevance, region.map(|r| r.continent.as_str())),
                nation_relevance: relevance(&e.nation_relevance, region.map(|r| r.country.as_str())),
                spike_duration_hours: e.spike_duration_hours,
                likelihood: e.likelihood,
                semantic_signature: e.semantic_signature.as_ref().map(|s| s.cluster_ids.clone()),
                target_peak_z: by_net.get(net).and_then(|z| z.max_in(start, end)),
                spike_count: spikes.iter().filter(|s| s.network_id == net && s.overlaps(start, end)).count(),
            });
        }
    }
    Ok(rows)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Writes rows as CSV with `signature_levels` signature columns.
pub fn write_features_csv<W: Write>(writer: W, rows: &[FeatureRow], signature_levels: usize) -> Result<(), CorrelationError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..signature_levels).map(|i| format!("sig_level_{i}")));
    header.extend(["target_peak_z".to_string(), "spike_count".to_string()]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.network_id.clone(),
            r.event_id.clone(),
            ts(&r.window_start),
            ts(&r.window_end),
            ts(&r.event_time_utc),
            r.date.clone(),
            r.time.clone(),
            r.description.clone(),
            opt(&r.category),
            r.entities.as_ref().map(|v| v.join(";")).unwrap_or_default(),
            r.platforms.as_ref().map(|v| v.join(";")).unwrap_or_default(),
            opt(&r.data_per_user_mb),
            opt(&r.audience_size),
            opt(&r.continent_relevance),
            opt(&r.nation_relevance),
            opt(&r.spike_duration_hours),
            opt(&r.likelihood),
        ];
        for i in 0..signature_levels {
            rec.push(r.semantic_signature.as_ref().and_then(|s| s.get(i)).map(ToString::to_string).unwrap_or_default());
        }
        rec.push(opt(&r.target_peak_z));
        rec.push(r.spike_count.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SemanticSignature;
    use chrono::TimeZone;

    fn event() -> EventAbstraction {
        let t = Utc.with_ymd_and_hms(2025, 6, 10, 20, 0, 0).unwrap();
        let mut e = EventAbstraction::new("2025-06-10", "20:00", "Cup final", "rec-1", t - Duration::days(10));
        e.event_id = "evt-1".into();
        e.event_time_utc = Some(t);
        e.category = Some("Sports".into());
        e.entities = Some(vec!["Team X".into(), "Team Y".into()]);
        e.platforms = Some(vec!["StreamCo".into()]);
        e.data_per_user_mb = Some(1500);
        e.audience_size = Some(2_000_000);
        e.continent_relevance = Some([("Europe".to_string(), 0.9)].into());
        e.nation_relevance = Some([("DE".to_string(), 0.8)].into());
        e.spike_duration_hours = Some(2.5);
        e.likelihood = Some(9);
        e.semantic_signature = Some(SemanticSignature { levels: vec![3, 5], cluster_ids: vec![1, 4] });
        e
    }

    fn regions() -> RegionMap {
        [("ixp-de".to_string(), NetworkRegion { country: "DE".into(), continent: "Europe".into() })].into()
    }

    #[test]
    fn one_row_with_fixed_schema() {
        let rows = export_features(&[event()], &[], &[], &regions(), &FeatureConfig::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.window_end - r.window_start, Duration::days(3));
        assert_eq!(r.continent_relevance, Some(0.9));
        assert_eq!(r.nation_relevance, Some(0.8));
        assert_eq!(r.target_peak_z, None);
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &rows, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 4 + 13 + 2 + 2);
        assert_eq!(&header[17..19], &["sig_level_0", "sig_level_1"]);
        assert_eq!(
            lines.next().unwrap(),
            "ixp-de,evt-1,2025-06-09T08:00:00Z,2025-06-12T08:00:00Z,2025-06-10T20:00:00Z,2025-06-10,20:00,Cup final,Sports,Team X;Team Y,StreamCo,1500,2000000,0.9,0.8,2.5,9,1,4,,0"
        );
    }

    #[test]
    fn target_from_traffic_and_missing_signature() {
        let mut e = event();
        e.semantic_signature = None;
        let z = ZSeries {
            network_id: "ixp-fr".into(),
            start: Utc.with_ymd_and_hms(2025, 6, 10, 0, 0, 0).unwrap(),
            step: 3600,
            z_values: (0..24).map(|h| Some(h as f64 / 4.0)).collect(),
        };
        let rows = export_features(&[e], &[], &[z], &regions(), &FeatureConfig::default()).unwrap();
        assert_eq!(rows.iter().map(|r| r.network_id.as_str()).collect::<Vec<_>>(), vec!["ixp-de", "ixp-fr"]);
        assert_eq!(rows[1].target_peak_z, Some(23.0 / 4.0));
        assert_eq!(rows[1].continent_relevance, None);
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &rows, 1).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().nth(2).unwrap().ends_with(",,5.75,0"));
    }
}
