//! Event extraction and metadata inference with an LLM ensemble.

mod aggregate;
mod backend;
mod fields;
mod retrieval;

pub use aggregate::{aggregate_runs, guarded_median, median, normalize_label, MAX_SPREAD_RATIO};
pub use backend::{
    prompt_hash, DecodingParams, FixtureMap, HttpLlmBackend, LlmBackend, LlmBackendConfig, LlmError, RecordingBackend,
    StubBackend,
};
pub use fields::{
    apply_field, clear_field, inferred_fields, parse_field_output, strip_reasoning, Aggregation, DataType, FieldName,
    FieldSpec, FIELD_SPECS,
};
pub use retrieval::{
    build_queries, enrich_with_context, ContextBundle, FixtureRetriever, HttpSummaryRetriever, RetrievalClient,
    RetrievalError, RetrievedDoc,
};

use std::collections::BTreeMap;

use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::ingest::truncate_chars;
use crate::model::{
    derive_event_time, parse_event_date, ContentRecord, EventAbstraction, EventDraft, InferenceRun, InvariantViolation,
    RunOutput, UNKNOWN_TIME,
};
use crate::parallel::bounded_map;

pub const EXTRACT_TEMPLATE: &str = include_str!("../../prompts/extract_events.v1.txt");
pub const FIELD_FRAME_TEMPLATE: &str = include_str!("../../prompts/field_frame.v1.txt");

/// Appended to the extraction prompt when the first reply was unusable.
pub const FORMAT_REMINDER: &str =
    "\nREMINDER: your previous reply could not be parsed. Reply with only a JSON array such as [{\"headline\": \"...\", \"date\": \"YYYY-MM-DD\", \"time\": \"HH:MM\"}] or [].\n";

/// Instruction text of a field template id.
pub fn field_instructions(template_id: &str) -> Option<&'static str> {
    Some(match template_id {
        "category.v1" => include_str!("../../prompts/category.v1.txt"),
        "entities.v1" => include_str!("../../prompts/entities.v1.txt"),
        "platforms.v1" => include_str!("../../prompts/platforms.v1.txt"),
        "data_per_user_mb.v1" => include_str!("../../prompts/data_per_user_mb.v1.txt"),
        "audience_size.v1" => include_str!("../../prompts/audience_size.v1.txt"),
        "continent_relevance.v1" => include_str!("../../prompts/continent_relevance.v1.txt"),
        "nation_relevance.v1" => include_str!("../../prompts/nation_relevance.v1.txt"),
        "spike_duration_hours.v1" => include_str!("../../prompts/spike_duration_hours.v1.txt"),
        "likelihood.v1" => include_str!("../../prompts/likelihood.v1.txt"),
        _ => return None,
    })
}

/// Replaces `{{key}}` placeholders in one pass; values are not rescanned.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 2 + close + 2]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("{context}: {source}")]
    Backend {
        context: String,
        #[source]
        source: LlmError,
    },
    #[error("record {record_id}: unparseable extraction output after re-prompt")]
    Unparseable { record_id: String },
    #[error("invalid draft: {0}")]
    InvalidDraft(#[from] InvariantViolation),
    #[error("precondition: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub ensemble_size: usize,
    pub max_attempts: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Retries of a request that timed out or failed transiently.
    pub timeout_retries: u32,
    /// Events processed concurrently.
    pub parallelism: usize,
    /// Zone assumed for event times without an explicit offset.
    pub default_utc_offset_minutes: i32,
    pub max_context_docs: usize,
    pub context_doc_chars: usize,
    pub excerpt_chars: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 3,
            max_attempts: 3,
            temperature: 0.6,
            max_tokens: 2048,
            timeout_retries: 2,
            parallelism: 4,
            default_utc_offset_minutes: 0,
            max_context_docs: 3,
            context_doc_chars: 1500,
            excerpt_chars: 4000,
        }
    }
}

fn call(
    llm: &dyn LlmBackend,
    prompt: &str,
    params: &DecodingParams,
    retries: u32,
    context: impl Fn() -> String,
) -> Result<String, InferenceError> {
    let mut tries = 0;
    loop {
        match llm.complete(prompt, params) {
            Ok(s) => return Ok(s),
            Err(e) if e.is_retryable() && tries < retries => {
                log::warn!("{}: {e}; retrying", context());
                tries += 1;
            }
            Err(source) => return Err(InferenceError::Backend { context: context(), source }),
        }
    }
}

fn or_none(s: String) -> String {
    if s.trim().is_empty() {
        "(none)".into()
    } else {
        s
    }
}

/// The extraction prompt for a record.
pub fn extraction_prompt(record: &ContentRecord) -> String {
    let comments = record.comments.iter().map(|c| format!("- {c}")).collect::<Vec<_>>().join("\n");
    let linked = record.linked_texts.iter().map(|l| format!("[{}]\n{}", l.url, l.text)).collect::<Vec<_>>().join("\n\n");
    render_template(
        EXTRACT_TEMPLATE,
        &[
            ("record_id", &record.record_id),
            ("created_at", &record.created_at.to_rfc3339_opts(SecondsFormat::Secs, true)),
            ("title", &record.title),
            ("body", &or_none(record.body_text.clone())),
            ("comments", &or_none(comments)),
            ("linked", &or_none(linked)),
        ],
    )
}

#[derive(Deserialize)]
struct DraftReply {
    headline: String,
    date: String,
    #[serde(default)]
    time: Option<String>,
}

fn parse_drafts(raw: &str) -> Option<Vec<Value>> {
    match serde_json::from_str::<Value>(strip_reasoning(raw)).ok()? {
        Value::Array(items) => Some(items),
        Value::Object(mut m) => match m.remove("events") {
            Some(Value::Array(items)) => Some(items),
            _ => None,
        },
        _ => None,
    }
}

/// Extracts the upcoming events announced in `record`.
///
/// Items with a missing headline or an invalid date are dropped with a
/// warning; events dated before the record's creation are kept with
/// `in_past` set.
pub fn extract_events(
    record: &ContentRecord,
    llm: &dyn LlmBackend,
    config: &InferenceConfig,
) -> Result<Vec<EventDraft>, InferenceError> {
    record.validate().map_err(|e| InferenceError::Precondition(format!("record {}: {e}", record.record_id)))?;
    let prompt = extraction_prompt(record);
    let params = DecodingParams { temperature: config.temperature, max_tokens: config.max_tokens, run_index: 0 };
    let ctx = || format!("extracting events from {}", record.record_id);
    let mut items = parse_drafts(&call(llm, &prompt, &params, config.timeout_retries, ctx)?);
    if items.is_none() {
        let reprompt = format!("{prompt}{FORMAT_REMINDER}");
        items = parse_drafts(&call(llm, &reprompt, &params, config.timeout_retries, ctx)?);
    }
    let items = items.ok_or_else(|| InferenceError::Unparseable { record_id: record.record_id.clone() })?;
    let created = record.created_at.date_naive();
    let mut drafts = Vec::new();
    for item in items {
        let Ok(reply) = serde_json::from_value::<DraftReply>(item) else {
            log::warn!("{}: extraction item without headline/date skipped", record.record_id);
            continue;
        };
        let date = match parse_event_date(&reply.date) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{}: draft `{}` dropped: {e}", record.record_id, reply.headline);
                continue;
            }
        };
        let headline = reply.headline.trim().to_string();
        if headline.is_empty() {
            continue;
        }
        let time = reply.time.map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).unwrap_or_else(|| UNKNOWN_TIME.to_string());
        drafts.push(EventDraft {
            headline,
            date: date.format("%Y-%m-%d").to_string(),
            time,
            source_record: record.record_id.clone(),
            in_past: date < created,
        });
    }
    Ok(drafts)
}

/// Deterministic event id from the record and draft.
pub fn event_id_for(draft: &EventDraft) -> String {
    let mut h = Sha256::new();
    for part in [&draft.source_record, &draft.date, &draft.time, &draft.headline] {
        h.update(part.as_bytes());
        h.update([0x1f]);
    }
    format!("evt-{}", &hex::encode(h.finalize())[..16])
}

/// Creates an event from a draft; only the creation-time fields are set.
pub fn build_event(
    draft: &EventDraft,
    record: &ContentRecord,
    default_utc_offset_minutes: i32,
) -> Result<EventAbstraction, InferenceError> {
    draft.validate()?;
    if draft.source_record != record.record_id {
        return Err(InferenceError::Precondition(format!(
            "draft from {} paired with record {}",
            draft.source_record, record.record_id
        )));
    }
    let mut e = EventAbstraction::new(&draft.date, &draft.time, &draft.headline, &record.record_id, record.created_at);
    e.event_id = event_id_for(draft);
    e.event_time_utc = derive_event_time(&draft.date, &draft.time, default_utc_offset_minutes);
    Ok(e)
}

/// Source text shown with field prompts: title and body of each source
/// record in id order, cut to `max_chars`.
pub fn event_excerpt(event: &EventAbstraction, records: &BTreeMap<String, ContentRecord>, max_chars: usize) -> String {
    let mut ids = event.source_records.clone();
    ids.sort();
    let text = ids
        .iter()
        .filter_map(|id| records.get(id))
        .map(|r| format!("{}\n{}", r.title, r.body_text))
        .collect::<Vec<_>>()
        .join("\n\n");
    truncate_chars(&text, max_chars)
}

/// The prompt inferring `spec` for `event`.
pub fn field_prompt(event: &EventAbstraction, spec: &FieldSpec, excerpt: &str, context: &ContextBundle) -> Option<String> {
    let instructions = field_instructions(spec.prompt_template_id?)?;
    let context = if spec.uses_rag { context.render() } else { "(none)".into() };
    Some(render_template(
        FIELD_FRAME_TEMPLATE,
        &[
            ("field_name", spec.field_name.as_str()),
            ("description", &event.description),
            ("date", &event.date),
            ("time", &event.time),
            ("instructions", instructions.trim_end()),
            ("excerpt", &or_none(excerpt.to_string())),
            ("context", &context),
        ],
    ))
}

/// Runs the ensemble for one field until consensus or `max_attempts`.
///
/// Attempt `a`, run `i` is requested with run index `a * ensemble + i`.
/// A run whose completion cannot be parsed, or whose request keeps failing
/// transiently, abstains.
pub fn infer_field(
    event: &EventAbstraction,
    spec: &FieldSpec,
    excerpt: &str,
    context: &ContextBundle,
    llm: &dyn LlmBackend,
    config: &InferenceConfig,
) -> Result<InferenceRun, InferenceError> {
    if event.description.trim().is_empty() || parse_event_date(&event.date).is_err() {
        return Err(InferenceError::Precondition(format!("event {} lacks description or date", event.event_id)));
    }
    let prompt = field_prompt(event, spec, excerpt, context)
        .ok_or_else(|| InferenceError::Precondition(format!("field {} is not inferred by the ensemble", spec.field_name)))?;
    if config.ensemble_size == 0 || config.max_attempts == 0 {
        return Err(InferenceError::Precondition("ensemble size and attempts must be positive".into()));
    }
    let mut run_outputs = Vec::new();
    for attempt in 0..config.max_attempts {
        let mut outputs = Vec::with_capacity(config.ensemble_size);
        for i in 0..config.ensemble_size {
            let params = DecodingParams {
                temperature: config.temperature,
                max_tokens: config.max_tokens,
                run_index: attempt * config.ensemble_size as u32 + i as u32,
            };
            let ctx = || format!("inferring {} for {}", spec.field_name, event.event_id);
            let out = match call(llm, &prompt, &params, config.timeout_retries, ctx) {
                Ok(raw) => RunOutput { parsed: parse_field_output(spec.data_type, &raw), raw },
                Err(InferenceError::Backend { source, .. }) if source.is_retryable() => {
                    RunOutput { raw: format!("<error: {source}>"), parsed: None }
                }
                Err(e) => return Err(e),
            };
            outputs.push(out);
        }
        let parsed: Vec<_> = outputs.iter().map(|o| o.parsed.clone()).collect();
        let consensus = aggregate_runs(spec, &parsed);
        run_outputs.push(outputs);
        if !consensus.is_failed() || attempt + 1 == config.max_attempts {
            return Ok(InferenceRun {
                event_id: event.event_id.clone(),
                field_name: spec.field_name.as_str().to_string(),
                attempts: attempt + 1,
                run_outputs,
                consensus_value: consensus,
            });
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// Stores a run's consensus on the event, or marks the field low-confidence.
pub fn apply_run(event: &mut EventAbstraction, field: FieldName, run: &InferenceRun) {
    let name = field.as_str().to_string();
    event.stale_fields.retain(|f| *f != name);
    event.low_confidence.retain(|f| *f != name);
    match run.consensus_value.value() {
        Some(v) if apply_field(event, field, v) => {}
        _ => {
            clear_field(event, field);
            event.low_confidence.push(name);
        }
    }
}

/// Infers the requested fields (all inferred fields when `only` is `None`)
/// in table order. Reference articles are fetched once, after entities are
/// known, for the fields that use them.
pub fn enrich_event(
    event: &EventAbstraction,
    records: &BTreeMap<String, ContentRecord>,
    llm: &dyn LlmBackend,
    retriever: Option<&dyn RetrievalClient>,
    only: Option<&[FieldName]>,
    config: &InferenceConfig,
) -> Result<(EventAbstraction, Vec<InferenceRun>), InferenceError> {
    let mut event = event.clone();
    let excerpt = event_excerpt(&event, records, config.excerpt_chars);
    let mut context: Option<ContextBundle> = None;
    let mut runs = Vec::new();
    for spec in inferred_fields() {
        if only.is_some_and(|o| !o.contains(&spec.field_name)) {
            continue;
        }
        let ctx = if spec.uses_rag {
            context
                .get_or_insert_with(|| match retriever {
                    Some(r) => enrich_with_context(&event, r, config.max_context_docs, config.context_doc_chars),
                    None => ContextBundle { event_id: event.event_id.clone(), retrieved_docs: Vec::new() },
                })
                .clone()
        } else {
            ContextBundle::default()
        };
        let run = infer_field(&event, spec, &excerpt, &ctx, llm, config)?;
        apply_run(&mut event, spec.field_name, &run);
        runs.push(run);
    }
    Ok((event, runs))
}

/// Result of enriching one event in a batch.
pub type EnrichResult = Result<(EventAbstraction, Vec<InferenceRun>), InferenceError>;

/// [`enrich_event`] over many events with bounded parallelism; results keep
/// input order.
pub fn enrich_events(
    events: &[EventAbstraction],
    records: &BTreeMap<String, ContentRecord>,
    llm: &dyn LlmBackend,
    retriever: Option<&dyn RetrievalClient>,
    stale_only: bool,
    config: &InferenceConfig,
) -> Vec<EnrichResult> {
    bounded_map(events, config.parallelism, |_, e| {
        let stale: Vec<FieldName> = e.stale_fields.iter().filter_map(|f| f.parse().ok()).collect();
        let only = stale_only.then_some(stale.as_slice());
        enrich_event(e, records, llm, retriever, only, config)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Consensus, FieldValue, SourceKind};
    use chrono::{TimeZone, Utc};

    fn record() -> ContentRecord {
        ContentRecord {
            record_id: "rec-1".into(),
            source: SourceKind::ForumThread,
            url: "https://forum.example/1".into(),
            created_at: Utc.with_ymd_and_hms(2025, 5, 1, 9, 30, 0).unwrap(),
            fetched_at: Utc.with_ymd_and_hms(2025, 5, 2, 0, 0, 0).unwrap(),
            title: "Fixture list".into(),
            body_text: "Two matches announced".into(),
            comments: vec!["see you there".into()],
            engagement: 10,
            linked_texts: vec![],
        }
    }

    fn config() -> InferenceConfig {
        InferenceConfig { timeout_retries: 1, ..Default::default() }
    }

    #[test]
    fn two_event_completion_gives_two_drafts() {
        let r = record();
        let mut stub = StubBackend::default();
        stub.insert(
            &extraction_prompt(&r),
            vec![r#"[{"headline":"Semi final","date":"2025-05-20","time":"18:00 UTC"},{"headline":"Final","date":"2025-05-31","time":"unknown"}]"#.into()],
        );
        let drafts = extract_events(&r, &stub, &config()).unwrap();
        assert_eq!(drafts.len(), 2);
        assert_ne!(drafts[0].date, drafts[1].date);
        let events: Vec<_> = drafts.iter().map(|d| build_event(d, &r, 0).unwrap()).collect();
        assert!(events.iter().all(|e| e.source_records == vec!["rec-1".to_string()]));
        assert_ne!(events[0].event_id, events[1].event_id);
        assert_eq!(events[0].event_time_utc, Some(Utc.with_ymd_and_hms(2025, 5, 20, 18, 0, 0).unwrap()));
        assert_eq!(events[1].event_time_utc, Some(Utc.with_ymd_and_hms(2025, 5, 31, 12, 0, 0).unwrap()));
        assert_eq!(events[0].first_mentioned_at, r.created_at);
    }

    #[test]
    fn empty_reply_gives_no_drafts() {
        let r = record();
        let mut stub = StubBackend::default();
        stub.insert(&extraction_prompt(&r), vec!["<think>recipes only</think>\n[]".into()]);
        assert!(extract_events(&r, &stub, &config()).unwrap().is_empty());
    }

    #[test]
    fn unparseable_reply_is_reprompted_once() {
        let r = record();
        let prompt = extraction_prompt(&r);
        let mut stub = StubBackend::default();
        stub.insert(&prompt, vec!["Sure! The event is the final.".into()]);
        stub.insert(&format!("{prompt}{FORMAT_REMINDER}"), vec![r#"[{"headline":"Final","date":"2025-04-01"}]"#.into()]);
        let drafts = extract_events(&r, &stub, &config()).unwrap();
        assert_eq!(drafts.len(), 1);
        assert!(drafts[0].in_past);
        assert_eq!(drafts[0].time, UNKNOWN_TIME);

        let mut stub = StubBackend::default();
        stub.insert(&prompt, vec!["nope".into()]);
        stub.insert(&format!("{prompt}{FORMAT_REMINDER}"), vec!["still nope".into()]);
        assert!(matches!(extract_events(&r, &stub, &config()), Err(InferenceError::Unparseable { .. })));
    }

    #[test]
    fn invalid_dates_dropped_and_rejected() {
        let r = record();
        let mut stub = StubBackend::default();
        stub.insert(&extraction_prompt(&r), vec![r#"[{"headline":"A","date":"31/13/2025"},{"headline":"B","date":"2025-06-01"}]"#.into()]);
        let drafts = extract_events(&r, &stub, &config()).unwrap();
        assert_eq!(drafts.iter().map(|d| d.headline.as_str()).collect::<Vec<_>>(), vec!["B"]);
        let bad = EventDraft { headline: "x".into(), date: "31/13/2025".into(), time: "unknown".into(), source_record: "rec-1".into(), in_past: false };
        assert!(matches!(build_event(&bad, &r, 0), Err(InferenceError::InvalidDraft(_))));
    }

    struct Flaky {
        fails: std::sync::atomic::AtomicU32,
    }
    impl LlmBackend for Flaky {
        fn complete(&self, _: &str, _: &DecodingParams) -> Result<String, LlmError> {
            if self.fails.fetch_sub(1, std::sync::atomic::Ordering::SeqCst) > 0 {
                Err(LlmError::Timeout)
            } else {
                Ok("[]".into())
            }
        }
    }

    #[test]
    fn timeouts_retried_then_fail() {
        let r = record();
        assert!(extract_events(&r, &Flaky { fails: 1.into() }, &config()).unwrap().is_empty());
        let err = extract_events(&r, &Flaky { fails: 2.into() }, &config()).unwrap_err();
        assert!(matches!(err, InferenceError::Backend { source: LlmError::Timeout, .. }));
    }

    fn event() -> EventAbstraction {
        let mut e = EventAbstraction::new("2025-05-31", "20:00", "Cup final", "rec-1", Utc.with_ymd_and_hms(2025, 5, 1, 0, 0, 0).unwrap());
        e.event_id = "evt-1".into();
        e
    }

    #[test]
    fn retries_until_consensus() {
        let e = event();
        let spec = FieldName::Category.spec();
        let prompt = field_prompt(&e, spec, "", &ContextBundle::default()).unwrap();
        let mut stub = StubBackend::default();
        let replies = ["\"A\"", "\"B\"", "\"C\"", "\"Sports\"", "garbage", "{\"value\":\"sports\"}"];
        stub.insert(&prompt, replies.iter().map(|s| s.to_string()).collect());
        let run = infer_field(&e, spec, "", &ContextBundle::default(), &stub, &config()).unwrap();
        assert_eq!(run.attempts, 2);
        run.validate(3).unwrap();
        assert_eq!(run.run_outputs[1][1].parsed, None);
        assert_eq!(run.consensus_value, Consensus::Agreed(FieldValue::Text("Sports".into())));
        assert_eq!(run, infer_field(&e, spec, "", &ContextBundle::default(), &stub, &config()).unwrap());
    }

    #[test]
    fn persistent_disagreement_fails_and_marks_low_confidence() {
        let mut e = event();
        let spec = FieldName::Category.spec();
        let prompt = field_prompt(&e, spec, "", &ContextBundle::default()).unwrap();
        let mut stub = StubBackend::default();
        stub.insert(&prompt, vec!["\"A\"".into(), "\"B\"".into(), "\"C\"".into()]);
        let run = infer_field(&e, spec, "", &ContextBundle::default(), &stub, &config()).unwrap();
        assert_eq!(run.attempts, 3);
        assert_eq!(run.consensus_value, Consensus::Failed);
        e.category = Some("stale".into());
        apply_run(&mut e, FieldName::Category, &run);
        assert_eq!(e.category, None);
        assert_eq!(e.low_confidence, vec!["category"]);
    }

    #[test]
    fn missing_fixture_is_fatal() {
        let e = event();
        let err = infer_field(&e, FieldName::Category.spec(), "", &ContextBundle::default(), &StubBackend::default(), &config()).unwrap_err();
        assert!(err.to_string().contains("no stub fixture for prompt hash"));
    }

    #[test]
    fn fixed_fields_are_not_inferred() {
        let e = event();
        let err = infer_field(&e, FieldName::Date.spec(), "", &ContextBundle::default(), &StubBackend::default(), &config()).unwrap_err();
        assert!(matches!(err, InferenceError::Precondition(_)));
    }

    #[test]
    fn rag_context_only_in_rag_fields() {
        let e = event();
        let ctx = ContextBundle {
            event_id: "evt-1".into(),
            retrieved_docs: vec![RetrievedDoc { title: "Team X".into(), summary: "A club.".into(), url: "u".into() }],
        };
        assert!(field_prompt(&e, FieldName::Platforms.spec(), "x", &ctx).unwrap().contains("## Team X\nA club."));
        assert!(!field_prompt(&e, FieldName::Category.spec(), "x", &ctx).unwrap().contains("Team X"));
    }

    #[test]
    fn template_rendering() {
        assert_eq!(render_template("a {{x}} b {{y}} {{x}}", &[("x", "1"), ("y", "{{x}}")]), "a 1 b {{x}} 1");
        assert_eq!(render_template("{{missing}} {{", &[]), "{{missing}} {{");
        for spec in inferred_fields() {
            assert!(field_instructions(spec.prompt_template_id.unwrap()).is_some());
        }
        let p = extraction_prompt(&record());
        assert!(!p.contains("{{"));
        assert!(p.contains("RECORD_ID: rec-1\nPOSTED_AT: 2025-05-01T09:30:00Z\n"));
    }
}
