//! Traffic CSV input/output.
//!
//! Format: header `timestamp_utc,network_id,bits_per_second`, one sample per
//! row, RFC 3339 timestamps. Rows may appear in any order; each network is
//! placed on a uniform grid whose step is the smallest gap between its
//! samples, and absent grid points become missing samples.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{InvariantViolation, TrafficSeries};

#[derive(Debug, thiserror::Error)]
pub enum TrafficIoError {
    #[error("traffic CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("traffic I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("network `{network}`: {message}")]
    Network { network: String, message: String },
    #[error(transparent)]
    Invalid(#[from] InvariantViolation),
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    timestamp_utc: String,
    network_id: String,
    bits_per_second: f64,
}

pub fn read_traffic_csv(path: impl AsRef<Path>) -> Result<Vec<TrafficSeries>, TrafficIoError> {
    parse_traffic_csv(File::open(path)?)
}

/// Parses traffic rows into one series per network, ordered by network id.
pub fn parse_traffic_csv<R: Read>(reader: R) -> Result<Vec<TrafficSeries>, TrafficIoError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["timestamp_utc", "network_id", "bits_per_second"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(TrafficIoError::Row { row: 1, message: format!("expected header {}", expected.join(",")) });
    }
    let mut by_network: BTreeMap<String, Vec<(DateTime<Utc>, f64)>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        let ts = DateTime::parse_from_rfc3339(row.timestamp_utc.trim())
            .map_err(|e| TrafficIoError::Row { row: i + 2, message: format!("bad timestamp `{}`: {e}", row.timestamp_utc) })?
            .with_timezone(&Utc);
        by_network.entry(row.network_id).or_default().push((ts, row.bits_per_second));
    }
    by_network.into_iter().map(|(network, samples)| to_series(network, samples)).collect()
}

fn to_series(network: String, mut samples: Vec<(DateTime<Utc>, f64)>) -> Result<TrafficSeries, TrafficIoError> {
    let err = |message: String| TrafficIoError::Network { network: network.clone(), message };
    samples.sort_by_key(|(ts, _)| *ts);
    if samples.len() < 2 {
        return Err(err("at least two samples are needed to infer the sampling step".into()));
    }
    let mut step = i64::MAX;
    for w in samples.windows(2) {
        let d = (w[1].0 - w[0].0).num_seconds();
        if d == 0 {
            return Err(err(format!("duplicate timestamp {}", w[0].0)));
        }
        step = step.min(d);
    }
    let start = samples[0].0;
    let span = (samples[samples.len() - 1].0 - start).num_seconds();
    let mut values = vec![None; (span / step) as usize + 1];
    for (ts, v) in samples {
        let offset = (ts - start).num_seconds();
        if offset % step != 0 {
            return Err(err(format!("timestamp {ts} is off the {step}s grid")));
        }
        values[(offset / step) as usize] = Some(v);
    }
    let step = u32::try_from(step).map_err(|_| err(format!("step {step}s is too large")))?;
    Ok(TrafficSeries::new(network, start, step, values)?)
}

pub fn write_traffic_csv(path: impl AsRef<Path>, series: &[TrafficSeries]) -> Result<(), TrafficIoError> {
    let file = File::create(path)?;
    write_traffic(file, series)
}

pub fn write_traffic<W: Write>(writer: W, series: &[TrafficSeries]) -> Result<(), TrafficIoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp_utc", "network_id", "bits_per_second"])?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            if let Some(v) = v {
                w.write_record([
                    s.timestamp(i).to_rfc3339_opts(SecondsFormat::Secs, true),
                    s.network_id.clone(),
                    format!("{v}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn round_trip_with_gap() {
        let start = Utc.with_ymd_and_hms(2025, 3, 3, 0, 0, 0).unwrap();
        let a = TrafficSeries::new("b-net", start, 60, vec![Some(1.5), None, Some(3.0), Some(0.0)]).unwrap();
        let b = TrafficSeries::dense("a-net", start, 300, vec![10.0, 20.0]).unwrap();
        let mut buf = Vec::new();
        write_traffic(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_utc,network_id,bits_per_second\n2025-03-03T00:00:00Z,b-net,1.5\n"));
        let parsed = parse_traffic_csv(&buf[..]).unwrap();
        assert_eq!(parsed, vec![b, a]);
    }

    #[test]
    fn rejects_duplicates_and_off_grid() {
        let dup = "timestamp_utc,network_id,bits_per_second\n2025-03-03T00:00:00Z,n,1\n2025-03-03T00:00:00Z,n,2\n";
        assert!(matches!(parse_traffic_csv(dup.as_bytes()), Err(TrafficIoError::Network { .. })));
        let off = "timestamp_utc,network_id,bits_per_second\n2025-03-03T00:00:00Z,n,1\n2025-03-03T00:02:00Z,n,2\n2025-03-03T00:05:00Z,n,2\n";
        assert!(matches!(parse_traffic_csv(off.as_bytes()), Err(TrafficIoError::Network { .. })));
        let bad_header = "ts,network,bps\n";
        assert!(matches!(parse_traffic_csv(bad_header.as_bytes()), Err(TrafficIoError::Row { .. })));
        let negative = "timestamp_utc,network_id,bits_per_second\n2025-03-03T00:00:00Z,n,-1\n2025-03-03T00:01:00Z,n,2\n";
        assert!(matches!(parse_traffic_csv(negative.as_bytes()), Err(TrafficIoError::Invalid(_))));
    }
}
