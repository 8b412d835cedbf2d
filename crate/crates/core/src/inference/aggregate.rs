//! Ensemble consensus rules.
//!
//! Every rule is a function of the multiset of run values, so the order of
//! runs never matters.

use std::collections::{BTreeMap, BTreeSet};

use super::fields::{Aggregation, DataType, FieldSpec};
use crate::model::{Consensus, FieldValue};

/// Ratio beyond which two same-sign numbers count as disagreeing.
pub const MAX_SPREAD_RATIO: f64 = 10.0;

/// Voting key: lowercase, trimmed, single-spaced, no trailing punctuation.
pub fn normalize_label(s: &str) -> String {
    let lower = s.to_lowercase();
    let collapsed = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(|c: char| c.is_ascii_punctuation()).trim_end().to_string()
}

/// Combines one attempt's parsed runs (`None` = abstain) into a consensus.
pub fn aggregate_runs(spec: &FieldSpec, runs: &[Option<FieldValue>]) -> Consensus {
    let present: Vec<&FieldValue> = runs.iter().flatten().collect();
    if present.is_empty() {
        return Consensus::Failed;
    }
    let agreed = match spec.aggregation {
        Aggregation::FixedOnCreation | Aggregation::MultiLevelClustering => None,
        Aggregation::PluralityString => plurality(&texts(&present)).map(FieldValue::Text),
        Aggregation::VotesGe2 => Some(FieldValue::TextList(votes_ge_2(&lists(&present)))),
        Aggregation::Median => {
            let xs = numbers(&present);
            guarded_median(&xs).map(|m| match spec.data_type {
                DataType::Integer | DataType::Integer0To10 => FieldValue::Integer(m.round() as i64),
                _ => FieldValue::Real(m),
            })
        }
        Aggregation::PerEntryMedian => per_entry_median(&maps(&present)).map(FieldValue::RealMap),
    };
    agreed.map_or(Consensus::Failed, Consensus::Agreed)
}

fn texts<'a>(vals: &[&'a FieldValue]) -> Vec<&'a str> {
    vals.iter()
        .filter_map(|v| match v {
            FieldValue::Text(s) => Some(s.as_str()),
            _ => None,
        })
        .collect()
}

fn lists<'a>(vals: &[&'a FieldValue]) -> Vec<&'a [String]> {
    vals.iter()
        .filter_map(|v| match v {
            FieldValue::TextList(l) => Some(l.as_slice()),
            _ => None,
        })
        .collect()
}

fn numbers(vals: &[&FieldValue]) -> Vec<f64> {
    vals.iter()
        .filter_map(|v| match v {
            FieldValue::Integer(i) => Some(*i as f64),
            FieldValue::Real(r) => Some(*r),
            _ => None,
        })
        .collect()
}

fn maps<'a>(vals: &[&'a FieldValue]) -> Vec<&'a BTreeMap<String, f64>> {
    vals.iter()
        .filter_map(|v| match v {
            FieldValue::RealMap(m) => Some(m),
            _ => None,
        })
        .collect()
}

/// Most common original spelling among `variants`; ties go to the
/// lexicographically smallest.
fn representative<'a>(variants: &[&'a str]) -> &'a str {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in variants {
        *counts.entry(v).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().find(|(_, c)| *c == best).map(|(v, _)| v).unwrap_or("")
}

/// The normalized label with the most votes, if it has at least two and no
/// other label ties it.
fn plurality(values: &[&str]) -> Option<String> {
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for v in values {
        let key = normalize_label(v);
        if !key.is_empty() {
            groups.entry(key).or_default().push(v.trim());
        }
    }
    let top = groups.values().map(Vec::len).max()?;
    let mut winners = groups.values().filter(|g| g.len() == top);
    let winner = winners.next()?;
    if top < 2 || winners.next().is_some() {
        return None;
    }
    Some(representative(winner).to_string())
}

/// Entries named by at least two runs, sorted by normalized label.
fn votes_ge_2(runs: &[&[String]]) -> Vec<String> {
    let mut groups: BTreeMap<String, (usize, Vec<&str>)> = BTreeMap::new();
    for run in runs {
        let mut seen = BTreeSet::new();
        for item in run.iter() {
            let key = normalize_label(item);
            if key.is_empty() {
                continue;
            }
            let g = groups.entry(key.clone()).or_default();
            g.1.push(item.trim());
            if seen.insert(key) {
                g.0 += 1;
            }
        }
    }
    groups.into_values().filter(|(votes, _)| *votes >= 2).map(|(_, variants)| representative(&variants).to_string()).collect()
}

/// Exact median; the mean of the middle pair for even counts.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    let same_sign = (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0);
    same_sign && a.abs().max(b.abs()) / a.abs().min(b.abs()) <= MAX_SPREAD_RATIO
}

/// Median of `xs`, provided at least two values lie within
/// [`MAX_SPREAD_RATIO`] of it. A lone value is accepted as is.
pub fn guarded_median(xs: &[f64]) -> Option<f64> {
    if xs.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let m = median(xs)?;
    if xs.len() == 1 {
        return Some(m);
    }
    (xs.iter().filter(|x| close(**x, m)).count() >= 2).then_some(m)
}

/// Per key, the guarded median over the runs that produced it. Keys need at
/// least two producers; keys failing the guard are dropped.
fn per_entry_median(runs: &[&BTreeMap<String, f64>]) -> Option<BTreeMap<String, f64>> {
    let mut by_key: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for (k, v) in run.iter() {
            by_key.entry(k.clone()).or_default().push(*v);
        }
    }
    let out: BTreeMap<String, f64> = by_key
        .into_iter()
        .filter(|(_, xs)| xs.len() >= 2)
        .filter_map(|(k, xs)| guarded_median(&xs).map(|m| (k, m)))
        .collect();
    let any_nonempty = runs.iter().any(|m| !m.is_empty());
    (!(out.is_empty() && any_nonempty)).then_some(out)
}
