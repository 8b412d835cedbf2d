//! Event metadata fields, their value types and aggregation rules.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{EventAbstraction, FieldValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldName {
    Date,
    Time,
    Description,
    Category,
    Entities,
    Platforms,
    DataPerUserMb,
    AudienceSize,
    ContinentRelevance,
    NationRelevance,
    SpikeDurationHours,
    Likelihood,
    SemanticSignature,
}

impl FieldName {
    pub const ALL: [FieldName; 13] = [
        FieldName::Date,
        FieldName::Time,
        FieldName::Description,
        FieldName::Category,
        FieldName::Entities,
        FieldName::Platforms,
        FieldName::DataPerUserMb,
        FieldName::AudienceSize,
        FieldName::ContinentRelevance,
        FieldName::NationRelevance,
        FieldName::SpikeDurationHours,
        FieldName::Likelihood,
        FieldName::SemanticSignature,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldName::Date => "date",
            FieldName::Time => "time",
            FieldName::Description => "description",
            FieldName::Category => "category",
            FieldName::Entities => "entities",
            FieldName::Platforms => "platforms",
            FieldName::DataPerUserMb => "data_per_user_mb",
            FieldName::AudienceSize => "audience_size",
            FieldName::ContinentRelevance => "continent_relevance",
            FieldName::NationRelevance => "nation_relevance",
            FieldName::SpikeDurationHours => "spike_duration_hours",
            FieldName::Likelihood => "likelihood",
            FieldName::SemanticSignature => "semantic_signature",
        }
    }

    pub fn spec(self) -> &'static FieldSpec {
        FIELD_SPECS.iter().find(|s| s.field_name == self).expect("every field has a spec")
    }
}

impl fmt::Display for FieldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FieldName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldName::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| format!("unknown field `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    String,
    StringList,
    Integer,
    Real,
    RealMap,
    Integer0To10,
    IntegerList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    FixedOnCreation,
    PluralityString,
    VotesGe2,
    Median,
    PerEntryMedian,
    MultiLevelClustering,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldSpec {
    pub field_name: FieldName,
    pub data_type: DataType,
    pub aggregation: Aggregation,
    /// Versioned instruction template, `None` for fields not inferred by
    /// the LLM.
    pub prompt_template_id: Option<&'static str>,
    pub uses_rag: bool,
}

impl FieldSpec {
    /// Whether the field is filled by ensemble inference.
    pub fn is_inferred(&self) -> bool {
        self.prompt_template_id.is_some()
    }
}

const fn spec(
    field_name: FieldName,
    data_type: DataType,
    aggregation: Aggregation,
    prompt_template_id: Option<&'static str>,
    uses_rag: bool,
) -> FieldSpec {
    FieldSpec { field_name, data_type, aggregation, prompt_template_id, uses_rag }
}

/// The metadata table, one row per field.
pub static FIELD_SPECS: [FieldSpec; 13] = [
    spec(FieldName::Date, DataType::String, Aggregation::FixedOnCreation, None, false),
    spec(FieldName::Time, DataType::String, Aggregation::FixedOnCreation, None, false),
    spec(FieldName::Description, DataType::String, Aggregation::FixedOnCreation, None, false),
    spec(FieldName::Category, DataType::String, Aggregation::PluralityString, Some("category.v1"), false),
    spec(FieldName::Entities, DataType::StringList, Aggregation::VotesGe2, Some("entities.v1"), false),
    spec(FieldName::Platforms, DataType::StringList, Aggregation::VotesGe2, Some("platforms.v1"), true),
    spec(FieldName::DataPerUserMb, DataType::Integer, Aggregation::Median, Some("data_per_user_mb.v1"), true),
    spec(FieldName::AudienceSize, DataType::Integer, Aggregation::Median, Some("audience_size.v1"), true),
    spec(FieldName::ContinentRelevance, DataType::RealMap, Aggregation::PerEntryMedian, Some("continent_relevance.v1"), true),
    spec(FieldName::NationRelevance, DataType::RealMap, Aggregation::PerEntryMedian, Some("nation_relevance.v1"), true),
    spec(FieldName::SpikeDurationHours, DataType::Real, Aggregation::Median, Some("spike_duration_hours.v1"), true),
    spec(FieldName::Likelihood, DataType::Integer0To10, Aggregation::Median, Some("likelihood.v1"), true),
    spec(FieldName::SemanticSignature, DataType::IntegerList, Aggregation::MultiLevelClustering, None, false),
];

/// Fields filled by ensemble inference, in inference order.
pub fn inferred_fields() -> impl Iterator<Item = &'static FieldSpec> {
    FIELD_SPECS.iter().filter(|s| s.is_inferred())
}

/// Removes `<think>` blocks and Markdown code fences around the answer.
pub fn strip_reasoning(raw: &str) -> &str {
    let mut s = raw;
    if let Some(end) = s.rfind("</think>") {
        s = &s[end + "</think>".len()..];
    }
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
        return rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    s
}

/// Parses one completion according to `data_type`. `None` means the run
/// abstains.
pub fn parse_field_output(data_type: DataType, raw: &str) -> Option<FieldValue> {
    let v: Value = serde_json::from_str(strip_reasoning(raw)).ok()?;
    let v = match v {
        Value::Object(mut m) if m.len() == 1 && m.contains_key("value") => m.remove("value")?,
        other => other,
    };
    match data_type {
        DataType::String => match v {
            Value::String(s) if !s.trim().is_empty() => Some(FieldValue::Text(s.trim().to_string())),
            _ => None,
        },
        DataType::StringList => {
            let items = v.as_array()?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let s = item.as_str()?.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
            }
            Some(FieldValue::TextList(out))
        }
        DataType::Integer => {
            let x = v.as_f64()?;
            (x.is_finite() && x >= 0.0 && x <= i64::MAX as f64).then(|| FieldValue::Integer(x.round() as i64))
        }
        DataType::Integer0To10 => {
            let x = v.as_f64()?;
            (x.fract() == 0.0 && (0.0..=10.0).contains(&x)).then_some(FieldValue::Integer(x as i64))
        }
        DataType::Real => {
            let x = v.as_f64()?;
            (x.is_finite() && x >= 0.0).then_some(FieldValue::Real(x))
        }
        DataType::RealMap => {
            let obj = v.as_object()?;
            let mut out = BTreeMap::new();
            for (k, x) in obj {
                let x = x.as_f64()?;
                if !(0.0..=1.0).contains(&x) || k.trim().is_empty() {
                    return None;
                }
                out.insert(k.trim().to_string(), x);
            }
            Some(FieldValue::RealMap(out))
        }
        DataType::IntegerList => None,
    }
}

/// Stores an agreed value on the event. Returns false when the value's
/// shape does not fit the field.
pub fn apply_field(event: &mut EventAbstraction, field: FieldName, value: &FieldValue) -> bool {
    match (field, value) {
        (FieldName::Category, FieldValue::Text(s)) => event.category = Some(s.clone()),
        (FieldName::Entities, FieldValue::TextList(v)) => event.entities = Some(v.clone()),
        (FieldName::Platforms, FieldValue::TextList(v)) => event.platforms = Some(v.clone()),
        (FieldName::DataPerUserMb, FieldValue::Integer(i)) if *i >= 0 => event.data_per_user_mb = Some(*i as u64),
        (FieldName::AudienceSize, FieldValue::Integer(i)) if *i >= 0 => event.audience_size = Some(*i as u64),
        (FieldName::ContinentRelevance, FieldValue::RealMap(m)) => event.continent_relevance = Some(m.clone()),
        (FieldName::NationRelevance, FieldValue::RealMap(m)) => event.nation_relevance = Some(m.clone()),
        (FieldName::SpikeDurationHours, FieldValue::Real(h)) => event.spike_duration_hours = Some(*h),
        (FieldName::Likelihood, FieldValue::Integer(i)) if (0..=10).contains(i) => event.likelihood = Some(*i as u8),
        _ => return false,
    }
    true
}

/// Clears an inferred field.
pub fn clear_field(event: &mut EventAbstraction, field: FieldName) {
    match field {
        FieldName::Category => event.category = None,
        FieldName::Entities => event.entities = None,
        FieldName::Platforms => event.platforms = None,
        FieldName::DataPerUserMb => event.data_per_user_mb = None,
        FieldName::AudienceSize => event.audience_size = None,
        FieldName::ContinentRelevance => event.continent_relevance = None,
        FieldName::NationRelevance => event.nation_relevance = None,
        FieldName::SpikeDurationHours => event.spike_duration_hours = None,
        FieldName::Likelihood => event.likelihood = None,
        FieldName::SemanticSignature => event.semantic_signature = None,
        FieldName::Date | FieldName::Time | FieldName::Description => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_one_spec_per_field() {
        for f in FieldName::ALL {
            assert_eq!(FIELD_SPECS.iter().filter(|s| s.field_name == f).count(), 1, "{f}");
            assert_eq!(f.as_str().parse::<FieldName>().unwrap(), f);
        }
    }

    #[test]
    fn table_rows() {
        use Aggregation::*;
        let rows: Vec<(&str, Aggregation)> = FIELD_SPECS.iter().map(|s| (s.field_name.as_str(), s.aggregation)).collect();
        assert_eq!(
            rows,
            vec![
                ("date", FixedOnCreation),
                ("time", FixedOnCreation),
                ("description", FixedOnCreation),
                ("category", PluralityString),
                ("entities", VotesGe2),
                ("platforms", VotesGe2),
                ("data_per_user_mb", Median),
                ("audience_size", Median),
                ("continent_relevance", PerEntryMedian),
                ("nation_relevance", PerEntryMedian),
                ("spike_duration_hours", Median),
                ("likelihood", Median),
                ("semantic_signature", MultiLevelClustering),
            ]
        );
        assert_eq!(inferred_fields().count(), 9);
    }

    #[test]
    fn parses_wrapped_and_bare_values() {
        assert_eq!(parse_field_output(DataType::String, r#"{"value": " Sports "}"#), Some(FieldValue::Text("Sports".into())));
        assert_eq!(parse_field_output(DataType::String, "<think>hmm {\"value\": 1}</think>\n\"Music\""), Some(FieldValue::Text("Music".into())));
        assert_eq!(parse_field_output(DataType::Integer, "```json\n{\"value\": 1e6}\n```"), Some(FieldValue::Integer(1_000_000)));
        assert_eq!(parse_field_output(DataType::StringList, r#"["a", " ", "b"]"#), Some(FieldValue::TextList(vec!["a".into(), "b".into()])));
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(parse_field_output(DataType::Integer0To10, "11"), None);
        assert_eq!(parse_field_output(DataType::Integer0To10, "7.5"), None);
        assert_eq!(parse_field_output(DataType::Integer, "-3"), None);
        assert_eq!(parse_field_output(DataType::RealMap, r#"{"EU": 1.2}"#), None);
        assert_eq!(parse_field_output(DataType::Real, "\"five\""), None);
        assert_eq!(parse_field_output(DataType::String, "Sports"), None);
    }

    #[test]
    fn apply_checks_shape() {
        let mut e: EventAbstraction = serde_json::from_str(
            r#"{"date":"2025-01-01","time":"unknown","description":"d","event_time_utc":null,"category":null,"entities":null,
            "platforms":null,"data_per_user_mb":null,"audience_size":null,"continent_relevance":null,"nation_relevance":null,
            "spike_duration_hours":null,"likelihood":null,"semantic_signature":null,"source_records":["rec-1"],
            "first_mentioned_at":"2025-01-01T00:00:00Z"}"#,
        )
        .unwrap();
        assert!(apply_field(&mut e, FieldName::Likelihood, &FieldValue::Integer(7)));
        assert!(!apply_field(&mut e, FieldName::Likelihood, &FieldValue::Integer(70)));
        assert!(!apply_field(&mut e, FieldName::Category, &FieldValue::Integer(1)));
        assert_eq!(e.likelihood, Some(7));
        clear_field(&mut e, FieldName::Likelihood);
        assert_eq!(e.likelihood, None);
    }
}
