//! Synthetic traffic, discussion corpus and a ground-truth language model.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, Timelike, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::pipeline::{
    BaselineSettings, ClusterSettings, EmbedderSettings, LlmSettings, PagesSettings, PipelineConfig, RetrievalSettings,
    SourceSettings,
};
use super::scenario::{PlantedEvent, Scenario};
use super::HarnessError;
use crate::correlation::{LeadTimeConfig, NetworkRegion, RegionMap};
use crate::inference::{DecodingParams, FixtureMap, LlmBackend, LlmError, RecordingBackend, RetrievedDoc, FORMAT_REMINDER};
use crate::ingest::{FilterConfig, RawComment, RawPost};
use crate::model::TrafficSeries;
use crate::semantics::fnv1a;
use crate::store::write_jsonl;
use crate::traffic::write_traffic_csv;

/// Ground truth for one planted event, written next to the traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantLabel {
    pub key: String,
    pub network_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub magnitude_z: f64,
    pub category: String,
    pub spontaneous: bool,
    pub sub_threshold: bool,
}

impl From<&PlantedEvent> for PlantLabel {
    fn from(e: &PlantedEvent) -> Self {
        PlantLabel {
            key: e.key.clone(),
            network_id: e.network_id.clone(),
            start: e.time,
            end: e.end(),
            magnitude_z: e.magnitude_z,
            category: e.category.clone(),
            spontaneous: e.spontaneous,
            sub_threshold: e.sub_threshold,
        }
    }
}

fn seasonal_base(base_bps: f64, daily_amplitude: f64, weekend_uplift: f64, t: DateTime<Utc>) -> f64 {
    let hour = f64::from(t.num_seconds_from_midnight()) / 3600.0;
    // Peaks at 20:00 UTC.
    let daily = 1.0 + daily_amplitude * (2.0 * PI * (hour - 14.0) / 24.0).sin();
    let weekend = if matches!(t.weekday(), Weekday::Sat | Weekday::Sun) { 1.0 + weekend_uplift } else { 1.0 };
    base_bps * daily * weekend
}

/// Seasonal traffic with Gaussian noise and a rectangular bump per planted
/// event, one series per network in id order, plus the plant labels.
pub fn synth_traffic(scenario: &Scenario) -> (Vec<TrafficSeries>, Vec<PlantLabel>) {
    let step = i64::from(scenario.step_seconds);
    let n = (i64::from(scenario.duration_weeks) * 7 * 86_400 / step) as usize;
    let mut networks: Vec<_> = scenario.networks.iter().collect();
    networks.sort_by(|a, b| a.network_id.cmp(&b.network_id));
    let mut series = Vec::with_capacity(networks.len());
    for net in networks {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ fnv1a(net.network_id.as_bytes()));
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let plants: Vec<&PlantedEvent> = scenario.planted_events.iter().filter(|e| e.network_id == net.network_id).collect();
        let values = (0..n)
            .map(|i| {
                let t = scenario.start + Duration::seconds(i as i64 * step);
                let base = seasonal_base(net.base_bps, net.daily_amplitude, net.weekend_uplift, t);
                let mut v = base * (1.0 + scenario.noise_std_fraction * noise.sample(&mut rng));
                for p in &plants {
                    if t >= p.time && t < p.end() {
                        v += p.magnitude_z * scenario.bump_scale() * base;
                    }
                }
                Some(v.max(0.0).round())
            })
            .collect();
        series.push(TrafficSeries { network_id: net.network_id.clone(), start: scenario.start, step: scenario.step_seconds, values });
    }
    let mut labels: Vec<PlantLabel> = scenario.planted_events.iter().map(PlantLabel::from).collect();
    labels.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.key.cmp(&b.key)));
    (series, labels)
}

/// Discussion posts, linked pages and reference articles for a scenario,
/// with the model that answers prompts about them truthfully.
pub struct SyntheticCorpus {
    pub posts: Vec<RawPost>,
    /// Lines appended to the post file that no reader can parse.
    pub malformed_lines: Vec<String>,
    pub pages: BTreeMap<String, String>,
    pub reference_docs: Vec<RetrievedDoc>,
    pub truth: TruthBackend,
}

fn community_for(category: &str) -> &'static str {
    match category {
        "TV & Film" => "television",
        "Sports" => "sports",
        "Music" => "music",
        "Gaming" => "gaming",
        "Technology" => "technology",
        _ => "worldnews",
    }
}

fn kind_for(category: &str) -> &'static str {
    match category {
        "TV & Film" => "television and film production",
        "Sports" => "sports competition or team",
        "Music" => "music act",
        "Gaming" => "video game title or studio",
        "Technology" => "technology company",
        _ => "subject of breaking news coverage",
    }
}

/// Date and time as a post would state them, in the event's offset.
fn stated_time(e: &PlantedEvent) -> (String, String) {
    let local = e.time + Duration::minutes(i64::from(e.utc_offset_minutes));
    let date = local.format("%Y-%m-%d").to_string();
    let clock = local.format("%H:%M").to_string();
    let time = if e.utc_offset_minutes == 0 {
        format!("{clock} UTC")
    } else {
        let m = e.utc_offset_minutes.abs();
        let sign = if e.utc_offset_minutes < 0 { '-' } else { '+' };
        format!("{clock}{sign}{:02}:{:02}", m / 60, m % 60)
    };
    (date, time)
}

fn lead(e: &PlantedEvent) -> Duration {
    Duration::seconds((e.lead_days * 86_400.0).round() as i64)
}

const COMMENT_POOL: [&str; 8] = [
    "Can't wait for this",
    "Which channel is carrying it?",
    "Setting a reminder now",
    "Hope the stream holds up this time",
    "Last year the servers melted",
    "Count me in",
    "Anyone know if there is a replay?",
    "Taking the evening off for this",
];

fn comments(rng: &mut ChaCha8Rng) -> Vec<RawComment> {
    let n = rng.gen_range(2..=5);
    (0..n).map(|_| RawComment { body: COMMENT_POOL[rng.gen_range(0..COMMENT_POOL.len())].into(), score: rng.gen_range(0..400) }).collect()
}

fn page_html(e: &PlantedEvent, date: &str, time: &str) -> String {
    format!(
        "<html><head><title>{h} | Wire Desk</title></head><body>\
         <nav><a href=\"/\">Home</a> <a href=\"/latest\">Latest</a></nav>\
         <article><h1>{h}</h1><p>{h} starts on {date} at {time}. It will be available on {p}.</p>\
         <p>Featuring {ents}.</p></article>\
         <footer><p>All rights reserved. Wire Desk.</p></footer></body></html>",
        h = e.headline,
        p = e.platforms.join(" and "),
        ents = e.entities.join(", "),
    )
}

fn draft_json(headline: &str, date: &str, time: &str) -> Value {
    json!({"headline": headline, "date": date, "time": time})
}

/// Headline the truth model extracts from re-announcements.
fn duplicate_headline(e: &PlantedEvent) -> String {
    format!("{} live", e.headline)
}

/// Builds the discussion corpus of `scenario`.
///
/// Every planted event gets a primary post at `time - lead_days` (spontaneous
/// events half an hour after they start) and `duplicate_posts`
/// re-announcements. One thread announces two sports events at once;
/// distractor threads pass the filter but announce nothing, and
/// low-engagement threads are filtered out.
pub fn synth_corpus(scenario: &Scenario) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x00c0_ffee);
    let mut posts = Vec::new();
    let mut pages = BTreeMap::new();
    let mut extractions: BTreeMap<String, String> = BTreeMap::new();
    let mut sloppy = BTreeSet::new();
    let mut truth_events = BTreeMap::new();
    let regions: BTreeMap<&str, (&str, &str)> =
        scenario.networks.iter().map(|n| (n.network_id.as_str(), (n.country.as_str(), n.continent.as_str()))).collect();

    for (i, e) in scenario.planted_events.iter().enumerate() {
        let (date, time) = stated_time(e);
        let community = community_for(&e.category);
        let news_url = format!("https://news.example/{}", e.key);
        let created = if e.spontaneous { e.time + Duration::minutes(30) } else { e.time - lead(e) };
        let mut outbound = vec![news_url.clone()];
        if i % 4 == 3 {
            outbound.push(format!("https://news.example/gone/{}", e.key));
        }
        pages.insert(news_url.clone(), page_html(e, &date, &time));
        let (title, body) = if e.spontaneous {
            (
                format!("LIVE: {}", e.headline),
                format!("Happening right now: **{}**. Follow along on {}.", e.headline, e.platforms.join(", ")),
            )
        } else {
            (
                format!("{} ({date})", e.headline),
                format!(
                    "**{}** is scheduled for {date} at {time}. Watch on {}.\n\n[Announcement]({news_url})",
                    e.headline,
                    e.platforms.join(", ")
                ),
            )
        };
        let post_id = format!("{}-a", e.key);
        extractions.insert(crate::ingest::record_id_for(&post_id), json!([draft_json(&e.headline, &date, &time)]).to_string());
        if i == 4 {
            sloppy.insert(crate::ingest::record_id_for(&post_id));
        }
        posts.push(RawPost {
            post_id: post_id.clone(),
            community: community.into(),
            title,
            body,
            score: rng.gen_range(40..2000),
            url: format!("https://forum.example/r/{community}/{post_id}"),
            outbound_urls: outbound,
            comments_raw: comments(&mut rng),
            created_at: created,
        });
        let (country, continent) = regions.get(e.network_id.as_str()).copied().unwrap_or(("", ""));
        let truth = TruthEvent { planted: e.clone(), country: country.into(), continent: continent.into() };
        truth_events.insert(e.headline.clone(), truth.clone());

        for j in 0..e.duplicate_posts {
            let post_id = format!("{}-d{j}", e.key);
            let created = created + lead(e) * (j as i32 + 1) / (e.duplicate_posts as i32 + 2);
            let weekday = (e.time + Duration::minutes(i64::from(e.utc_offset_minutes))).format("%A");
            let headline = duplicate_headline(e);
            extractions.insert(crate::ingest::record_id_for(&post_id), json!([draft_json(&headline, &date, &time)]).to_string());
            truth_events.insert(headline, truth.clone());
            posts.push(RawPost {
                post_id: post_id.clone(),
                community: community.into(),
                title: format!("Reminder: {} this {weekday}", e.headline),
                body: format!("Reminder that {} goes live on {date}, {time}. Who else is watching?", e.headline),
                score: rng.gen_range(40..2000),
                url: format!("https://forum.example/r/{community}/{post_id}"),
                outbound_urls: vec![],
                comments_raw: comments(&mut rng),
                created_at: created,
            });
        }
    }

    // One thread announcing two sports events, posted after both primaries
    // and before either event.
    let sports: Vec<&PlantedEvent> = scenario.planted_events.iter().filter(|e| e.category == "Sports" && !e.spontaneous).collect();
    let pair = sports.iter().enumerate().find_map(|(a, ea)| {
        sports[a + 1..].iter().find_map(|eb| {
            let created = (ea.time - lead(ea)).max(eb.time - lead(eb)) + Duration::hours(1);
            (created + Duration::hours(1) < ea.time.min(eb.time)).then_some((*ea, *eb, created))
        })
    });
    if let Some((a, b, created)) = pair {
        let (da, ta) = stated_time(a);
        let (db, tb) = stated_time(b);
        let post_id = "fixtures-1".to_string();
        extractions.insert(
            crate::ingest::record_id_for(&post_id),
            json!([draft_json(&a.headline, &da, &ta), draft_json(&b.headline, &db, &tb)]).to_string(),
        );
        posts.push(RawPost {
            post_id: post_id.clone(),
            community: "sports".into(),
            title: "Upcoming fixtures worth watching".into(),
            body: format!("- {} on {da} at {ta}\n- {} on {db} at {tb}", a.headline, b.headline),
            score: rng.gen_range(40..2000),
            url: format!("https://forum.example/r/sports/{post_id}"),
            outbound_urls: vec![],
            comments_raw: comments(&mut rng),
            created_at: created,
        });
    }

    let mid = scenario.start + Duration::weeks(i64::from(scenario.duration_weeks)) / 2;
    for k in 0..scenario.distractor_posts {
        let post_id = format!("cooking-{k}");
        extractions.insert(crate::ingest::record_id_for(&post_id), "[]".into());
        posts.push(RawPost {
            post_id: post_id.clone(),
            community: "cooking".into(),
            title: format!("Live cooking thread #{k}: sourdough tips"),
            body: "Share your starter routines and hydration ratios. No schedule, just bread.".into(),
            score: rng.gen_range(100..500),
            url: format!("https://forum.example/r/cooking/{post_id}"),
            outbound_urls: vec![],
            comments_raw: comments(&mut rng),
            created_at: mid + Duration::hours(i64::from(k) * 7),
        });
    }
    for k in 0..scenario.low_engagement_posts {
        let post_id = format!("quiet-{k}");
        posts.push(RawPost {
            post_id: post_id.clone(),
            community: "television".into(),
            title: format!("Premiere rumours thread {k}"),
            body: "Heard something might air eventually.".into(),
            score: rng.gen_range(0..5),
            url: format!("https://forum.example/r/television/{post_id}"),
            outbound_urls: vec![],
            comments_raw: vec![],
            created_at: mid + Duration::hours(i64::from(k) * 5 + 3),
        });
    }
    posts.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.post_id.cmp(&b.post_id)));

    let mut entities: BTreeMap<String, &PlantedEvent> = BTreeMap::new();
    for e in &scenario.planted_events {
        for ent in &e.entities {
            entities.entry(ent.clone()).or_insert(e);
        }
    }
    let reference_docs = entities
        .iter()
        .map(|(ent, e)| RetrievedDoc {
            title: ent.clone(),
            summary: format!("<p><b>{ent}</b> is a {} whose events are usually carried on {}.</p>", kind_for(&e.category), e.platforms.join(", ")),
            url: format!("https://ref.example/wiki/{}", ent.replace(' ', "_")),
        })
        .collect();

    let forced_retry = scenario.planted_events.first().map(|e| e.headline.clone());
    let low_confidence = scenario.planted_events.get(1).map(|e| e.headline.clone());
    SyntheticCorpus {
        posts,
        malformed_lines: vec!["{\"post_id\": \"truncated\", \"title\": ".into()],
        pages,
        reference_docs,
        truth: TruthBackend { extractions, sloppy, events: truth_events, forced_retry, low_confidence },
    }
}

#[derive(Debug, Clone)]
struct TruthEvent {
    planted: PlantedEvent,
    country: String,
    continent: String,
}

/// Answers extraction and field prompts from the scenario's ground truth.
///
/// Ensemble runs disagree the way a sampled model would: labels vary in
/// spelling, lists gain and lose items, numbers scatter around the truth and
/// some replies carry a reasoning preamble. Aggregation recovers the truth.
/// Three behaviours are scripted: the first event's category needs a second
/// attempt, the second event's likelihood never reaches consensus, and one
/// record's first extraction reply is not JSON.
#[derive(Debug, Clone)]
pub struct TruthBackend {
    extractions: BTreeMap<String, String>,
    sloppy: BTreeSet<String>,
    events: BTreeMap<String, TruthEvent>,
    forced_retry: Option<String>,
    low_confidence: Option<String>,
}

fn line_value<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(marker)).map(str::trim)
}

const CONTINENTS: [&str; 6] = ["Europe", "North America", "South America", "Asia", "Africa", "Oceania"];

fn neighbour(country: &str) -> &'static str {
    match country {
        "DE" => "AT",
        "US" => "CA",
        "BR" => "AR",
        _ => "GB",
    }
}

fn vary_list(items: &[String], extra: &str, k: u32) -> Vec<String> {
    let mut v = items.to_vec();
    match k {
        1 => v.push(extra.to_string()),
        2 if v.len() > 1 => {
            v.pop();
        }
        _ => {}
    }
    v
}

impl TruthBackend {
    fn field_value(&self, field: &str, e: &TruthEvent, run: u32) -> Option<Value> {
        let p = &e.planted;
        let k = run % 3;
        let headline = &p.headline;
        Some(match field {
            "category" if self.forced_retry.as_ref() == Some(headline) && run < 3 => json!(["Drama", "Comedy", "Documentary"][run as usize]),
            "category" => match k {
                1 => json!(format!("{}.", p.category.to_lowercase())),
                _ => json!(p.category),
            },
            "entities" => json!(vary_list(&p.entities, "Fan Zone", k)),
            "platforms" => json!(vary_list(&p.platforms, "Social Media", k)),
            "data_per_user_mb" => {
                let v = p.data_per_user_mb as f64;
                json!([v, (v * 1.25).round(), (v * 0.8).round()][k as usize] as u64)
            }
            "audience_size" => json!([p.audience_size, p.audience_size * 3, p.audience_size / 2][k as usize]),
            "continent_relevance" => {
                let others: Vec<&str> = CONTINENTS.iter().copied().filter(|c| *c != e.continent).take(2).collect();
                let mut m = serde_json::Map::new();
                m.insert(e.continent.clone(), json!(if k == 1 { 0.85 } else { 0.9 }));
                m.insert(others[0].into(), json!(0.3));
                if k != 2 {
                    m.insert(others[1].into(), json!(0.1));
                }
                Value::Object(m)
            }
            "nation_relevance" => {
                let mut m = serde_json::Map::new();
                m.insert(e.country.clone(), json!(if k == 2 { 0.8 } else { 0.9 }));
                m.insert(neighbour(&e.country).into(), json!(0.2));
                Value::Object(m)
            }
            "spike_duration_hours" => {
                let h = f64::from(p.duration_minutes) / 60.0;
                json!([h, h + 0.5, h * 0.75][k as usize])
            }
            "likelihood" if self.low_confidence.as_ref() == Some(headline) => match k {
                0 => json!(0),
                1 => json!(10),
                _ => return None,
            },
            "likelihood" => json!(if k == 1 { p.likelihood.saturating_sub(1) } else { p.likelihood }),
            _ => return None,
        })
    }
}

impl LlmBackend for TruthBackend {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, LlmError> {
        if let Some(record_id) = line_value(prompt, "RECORD_ID:") {
            if self.sloppy.contains(record_id) && !prompt.contains(FORMAT_REMINDER.trim()) {
                return Ok("Sure! This thread is about an upcoming keynote, here are the details you asked for.".into());
            }
            return Ok(self.extractions.get(record_id).cloned().unwrap_or_else(|| "[]".into()));
        }
        let (Some(field), Some(headline)) = (line_value(prompt, "FIELD:"), line_value(prompt, "EVENT:")) else {
            return Ok("I cannot answer that.".into());
        };
        let run = params.run_index;
        let reply = match self.events.get(headline).and_then(|e| self.field_value(field, e, run)) {
            Some(v) => json!({ "value": v }).to_string(),
            None => "n/a".into(),
        };
        Ok(if run % 3 == 2 { format!("<think>Checking the schedule and the sources.</think>\n{reply}") } else { reply })
    }
}

/// Paths of the files written by [`write_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOutput {
    pub dir: PathBuf,
    pub traffic: PathBuf,
    pub labels: PathBuf,
    pub posts: PathBuf,
    pub pages: PathBuf,
    pub references: PathBuf,
    pub regions: PathBuf,
    pub fixtures: PathBuf,
    pub pipeline: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(HarnessError::io(path))
}

/// The pipeline configuration used for a synthetic scenario; paths are
/// relative to the scenario directory.
pub fn scenario_pipeline_config(scenario: &Scenario) -> PipelineConfig {
    let mut communities: Vec<String> = scenario.planted_events.iter().map(|e| community_for(&e.category).to_string()).collect();
    communities.sort();
    communities.dedup();
    PipelineConfig {
        out_dir: "out".into(),
        as_of: scenario.end(),
        source: SourceSettings::File { path: "posts.jsonl".into() },
        filter: FilterConfig {
            search_terms: ["premiere", "final", "livestream", "live", "launch", "release"].map(String::from).to_vec(),
            communities,
            min_engagement: 20,
            require_outbound_link: false,
        },
        pages: PagesSettings::Fixture { path: "pages.json".into() },
        assembly: Default::default(),
        llm: LlmSettings::Stub { fixtures: "llm_fixtures.json".into() },
        retrieval: RetrievalSettings::Fixture { path: "references.json".into() },
        inference: Default::default(),
        embedder: EmbedderSettings::default(),
        dedup_threshold: crate::semantics::DEFAULT_SIM_THRESHOLD,
        cluster: ClusterSettings { levels: vec![3, 10], seed: scenario.seed },
        traffic: "traffic.csv".into(),
        baseline: BaselineSettings::default(),
        detection: Default::default(),
        matching: Default::default(),
        lead_time: LeadTimeConfig { bucket_categories: true, min_category_count: 3 },
        features: Default::default(),
        regions: Some("regions.json".into()),
        labels: Some("labels.jsonl".into()),
        spike_frequency_bins: vec![2.0, 3.0, 5.0],
        base_dir: PathBuf::new(),
    }
}

/// Writes traffic, labels, corpus, fixtures and a ready-to-run pipeline
/// configuration for `scenario` into `dir`.
///
/// The stub fixtures are recorded by running the pipeline once against
/// [`TruthBackend`] in a scratch directory under `dir`.
pub fn write_synthetic(scenario: &Scenario, dir: impl AsRef<Path>) -> Result<SyntheticOutput, HarnessError> {
    scenario.validate()?;
    let dir = dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    let out = SyntheticOutput {
        traffic: dir.join("traffic.csv"),
        labels: dir.join("labels.jsonl"),
        posts: dir.join("posts.jsonl"),
        pages: dir.join("pages.json"),
        references: dir.join("references.json"),
        regions: dir.join("regions.json"),
        fixtures: dir.join("llm_fixtures.json"),
        pipeline: dir.join("pipeline.json"),
        dir: dir.clone(),
    };
    write_json(&dir.join("scenario.json"), scenario)?;

    let (series, labels) = synth_traffic(scenario);
    write_traffic_csv(&out.traffic, &series).map_err(|e| HarnessError::Config(e.to_string()))?;
    write_jsonl(&out.labels, &labels).map_err(HarnessError::io(&out.labels))?;

    let corpus = synth_corpus(scenario);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&out.posts).map_err(HarnessError::io(&out.posts))?);
    for p in &corpus.posts {
        let line = serde_json::to_string(p).map_err(|e| HarnessError::Config(e.to_string()))?;
        writeln!(f, "{line}").map_err(HarnessError::io(&out.posts))?;
    }
    for l in &corpus.malformed_lines {
        writeln!(f, "{l}").map_err(HarnessError::io(&out.posts))?;
    }
    f.flush().map_err(HarnessError::io(&out.posts))?;
    drop(f);
    write_json(&out.pages, &corpus.pages)?;
    write_json(&out.references, &corpus.reference_docs)?;
    let regions: RegionMap = scenario
        .networks
        .iter()
        .map(|n| (n.network_id.clone(), NetworkRegion { country: n.country.clone(), continent: n.continent.clone() }))
        .collect();
    write_json(&out.regions, &regions)?;

    let mut config = scenario_pipeline_config(scenario);
    write_json(&out.pipeline, &config)?;

    let scratch = dir.join(".recording");
    config.base_dir = dir.clone();
    config.out_dir = scratch.clone();
    let recorder = RecordingBackend::new(corpus.truth);
    let result = super::run_pipeline_with(&config, Some(&recorder));
    let _ = std::fs::remove_dir_all(&scratch);
    result?;
    let fixtures: FixtureMap = recorder.into_fixtures();
    write_json(&out.fixtures, &fixtures)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{aggregate_runs, parse_field_output, FieldName};
    use crate::model::FieldValue;

    #[test]
    fn traffic_has_bumps_where_planted() {
        let s = Scenario::default_synthetic();
        let (series, labels) = synth_traffic(&s);
        assert_eq!(series.len(), 3);
        assert_eq!(labels.len(), 30);
        let per_week = 7 * 1440;
        for l in &labels {
            let z = series.iter().find(|z| z.network_id == l.network_id).unwrap();
            let from = (l.start - s.start).num_minutes() as usize;
            let to = (l.end - s.start).num_minutes() as usize;
            let mean = |a: usize, b: usize| z.values[a..b].iter().map(|v| v.unwrap()).sum::<f64>() / (b - a) as f64;
            let ratio = mean(from, to) / mean(from - per_week, to - per_week);
            let expected = 1.0 + l.magnitude_z * s.bump_scale();
            assert!((ratio - expected).abs() < 0.05, "{}: {ratio} vs {expected}", l.key);
        }
    }

    #[test]
    fn corpus_shape() {
        let s = Scenario::default_synthetic();
        let c = synth_corpus(&s);
        let dups: u32 = s.planted_events.iter().map(|e| e.duplicate_posts).sum();
        assert_eq!(c.posts.len() as u32, 30 + dups + 1 + s.distractor_posts + s.low_engagement_posts);
        assert!(c.posts.iter().any(|p| p.post_id == "fixtures-1"));
        for e in s.planted_events.iter().filter(|e| !e.spontaneous) {
            let primary = c.posts.iter().find(|p| p.post_id == format!("{}-a", e.key)).unwrap();
            assert_eq!(primary.created_at, e.time - lead(e));
        }
    }

    #[test]
    fn offsets_render_in_local_time() {
        let s = Scenario::default_synthetic();
        let e = s.planted_events.iter().find(|e| e.utc_offset_minutes == 60).unwrap();
        let (date, time) = stated_time(e);
        assert_eq!(crate::model::derive_event_time(&date, &time, 0), Some(e.time));
    }

    #[test]
    fn truth_runs_aggregate_to_truth() {
        let s = Scenario::default_synthetic();
        let c = synth_corpus(&s);
        let e = &s.planted_events[5];
        for field in [FieldName::Category, FieldName::Entities, FieldName::DataPerUserMb, FieldName::AudienceSize, FieldName::SpikeDurationHours] {
            let spec = field.spec();
            let runs: Vec<Option<FieldValue>> = (0..3)
                .map(|r| {
                    let prompt = format!("FIELD: {}\nEVENT: {}\n", field.as_str(), e.headline);
                    let raw = c.truth.complete(&prompt, &DecodingParams { temperature: 0.6, max_tokens: 10, run_index: r }).unwrap();
                    parse_field_output(spec.data_type, &raw)
                })
                .collect();
            let v = aggregate_runs(spec, &runs);
            let expected = match field {
                FieldName::Category => FieldValue::Text(e.category.clone()),
                FieldName::Entities => FieldValue::TextList(e.entities.clone()),
                FieldName::DataPerUserMb => FieldValue::Integer(e.data_per_user_mb as i64),
                FieldName::AudienceSize => FieldValue::Integer(e.audience_size as i64),
                _ => FieldValue::Real(f64::from(e.duration_minutes) / 60.0),
            };
            assert_eq!(v.value(), Some(&expected), "{field:?}");
        }
    }
}
