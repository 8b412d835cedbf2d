//! End-to-end pipeline over file artifacts.
//!
//! Stages run in order and communicate only through files in `out_dir`:
//! ingest, extract, enrich, embed, dedup, reinfer, cluster, detect,
//! correlate, report. A failing stage writes `run_report.json` naming it
//! and stops the run; earlier artifacts stay in place.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::report::{coverage_summary, write_lead_time_csv, write_spike_frequency_csv, CoverageSummary};
use super::synth::PlantLabel;
use super::HarnessError;
use crate::baseline::{detect_spikes, score_rolling, spike_frequency, DetectionConfig, ZSeries};
use crate::baseline::{DEFAULT_BIN_MINUTES, DEFAULT_STD_FLOOR_FRACTION, DEFAULT_WINDOW_WEEKS};
use crate::correlation::{
    export_features, lead_time_cdf, match_spikes_to_events, write_features_csv, FeatureConfig, LeadTimeConfig, MatchConfig,
    RegionMap, SpikeEventMatch,
};
use crate::inference::{
    build_event, enrich_events, extract_events, FixtureRetriever, HttpLlmBackend, HttpSummaryRetriever, InferenceConfig,
    InferenceError, LlmBackend, LlmBackendConfig, RetrievalClient, StubBackend,
};
use crate::ingest::{
    ingest, AssemblyConfig, Backoff, FileCorpusConnector, FilterConfig, HttpConnectorConfig, HttpJsonConnector, HttpPageFetcher,
    MapPageFetcher, PageFetcher, SourceConnector,
};
use crate::model::{ContentRecord, EventAbstraction, InferenceRun, SpikeRecord};
use crate::semantics::{
    cluster_multilevel, dedup_pass, embed_events, Embedder, EventEmbedding, HashingEmbedder, HttpEmbedder, HttpEmbedderConfig,
    DEFAULT_LEVELS, DEFAULT_SIM_THRESHOLD,
};
use crate::store::{load_live, read_jsonl, write_jsonl, JsonlStore};
use crate::traffic::read_traffic_csv;

/// Every file the pipeline writes into `out_dir`; cleared at the start of
/// a run.
pub const ARTIFACTS: [&str; 15] = [
    "records.jsonl",
    "ingest_report.json",
    "events.jsonl",
    "inference_runs.jsonl",
    "embeddings.jsonl",
    "dedup_report.json",
    "clusters.json",
    "spikes.jsonl",
    "matches.jsonl",
    "coverage.json",
    "lead_time.json",
    "lead_time.csv",
    "spike_frequency.csv",
    "features.csv",
    "run_report.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSettings {
    File { path: PathBuf },
    Http(HttpConnectorConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PagesSettings {
    /// Outbound links are not followed.
    #[default]
    None,
    Fixture {
        path: PathBuf,
    },
    Http {
        #[serde(default = "default_page_timeout")]
        timeout_seconds: u64,
        #[serde(default)]
        backoff: Backoff,
    },
}

fn default_page_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmSettings {
    Stub { fixtures: PathBuf },
    Http(LlmBackendConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrievalSettings {
    #[default]
    None,
    Fixture {
        path: PathBuf,
    },
    Http {
        base_url: String,
        #[serde(default = "default_page_timeout")]
        timeout_seconds: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSettings {
    Hashing {
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default)]
        seed: u64,
    },
    Http(HttpEmbedderConfig),
}

fn default_dimension() -> usize {
    HashingEmbedder::default().dimension
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        let h = HashingEmbedder::default();
        EmbedderSettings::Hashing { dimension: h.dimension, seed: h.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSettings {
    pub levels: Vec<usize>,
    pub seed: u64,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self { levels: DEFAULT_LEVELS.to_vec(), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSettings {
    pub window_weeks: u32,
    pub bin_minutes: u32,
    pub std_floor_fraction: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self { window_weeks: DEFAULT_WINDOW_WEEKS, bin_minutes: DEFAULT_BIN_MINUTES, std_floor_fraction: DEFAULT_STD_FLOOR_FRACTION }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_SIM_THRESHOLD
}

fn default_bins() -> Vec<f64> {
    vec![2.0, 3.0, 5.0]
}

/// Pipeline configuration. Relative paths resolve against the directory of
/// the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Fetch time stamped on ingested records.
    pub as_of: DateTime<Utc>,
    pub source: SourceSettings,
    pub filter: FilterConfig,
    #[serde(default)]
    pub pages: PagesSettings,
    #[serde(default)]
    pub assembly: AssemblyConfig,
    pub llm: LlmSettings,
    #[serde(default)]
    pub retrieval: RetrievalSettings,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub embedder: EmbedderSettings,
    #[serde(default = "default_threshold")]
    pub dedup_threshold: f64,
    #[serde(default)]
    pub cluster: ClusterSettings,
    pub traffic: PathBuf,
    #[serde(default)]
    pub baseline: BaselineSettings,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub matching: MatchConfig,
    #[serde(default)]
    pub lead_time: LeadTimeConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    /// JSON map of network id to region.
    #[serde(default)]
    pub regions: Option<PathBuf>,
    /// Planted-event labels (JSONL); enables `coverage.json`.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub spike_frequency_bins: Vec<f64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.out_dir).join(name)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        self.filter.validate().map_err(|e| cfg(&e))?;
        self.detection.validate().map_err(|e| cfg(&e))?;
        self.matching.validate().map_err(|e| cfg(&e))?;
        if let LlmSettings::Http(c) = &self.llm {
            c.validate().map_err(|e| cfg(&e))?;
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(HarnessError::Config(format!("dedup_threshold {} must be in (0, 1]", self.dedup_threshold)));
        }
        if self.cluster.levels.is_empty() || self.cluster.levels.contains(&0) {
            return Err(HarnessError::Config("cluster levels must be non-empty and positive".into()));
        }
        if self.spike_frequency_bins.iter().any(|z| !z.is_finite()) {
            return Err(HarnessError::Config("spike frequency bins must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Summary written to `run_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub counts: BTreeMap<String, usize>,
    /// Non-fatal per-item failures, in stage order.
    pub failures: Vec<String>,
    pub coverage: Option<CoverageSummary>,
    /// Wall time per stage; not written to disk so reruns stay identical.
    #[serde(skip)]
    pub timings: Vec<(String, StdDuration)>,
}

impl RunReport {
    fn new() -> Self {
        RunReport { status: RunStatus::Ok, failed_stage: None, error: None, counts: BTreeMap::new(), failures: Vec::new(), coverage: None, timings: Vec::new() }
    }

    pub fn count(&self, key: &str) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }
}

/// A pipeline stage, in run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Extract,
    Enrich,
    Embed,
    Dedup,
    Reinfer,
    Cluster,
    Detect,
    Correlate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Enrich,
        Stage::Embed,
        Stage::Dedup,
        Stage::Reinfer,
        Stage::Cluster,
        Stage::Detect,
        Stage::Correlate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Enrich => "enrich",
            Stage::Embed => "embed",
            Stage::Dedup => "dedup",
            Stage::Reinfer => "reinfer",
            Stage::Cluster => "cluster",
            Stage::Detect => "detect",
            Stage::Correlate => "correlate",
            Stage::Report => "report",
        }
    }

    fn uses_llm(self) -> bool {
        matches!(self, Stage::Extract | Stage::Enrich | Stage::Reinfer)
    }
}

/// Clears previous artifacts and runs every stage with the configured
/// backends.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, HarnessError> {
    run_pipeline_with(config, None)
}

/// [`run_pipeline`], using `llm` instead of the configured model when given.
pub fn run_pipeline_with(config: &PipelineConfig, llm: Option<&dyn LlmBackend>) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let out = config.resolve(&config.out_dir);
    std::fs::create_dir_all(&out).map_err(HarnessError::io(&out))?;
    for name in ARTIFACTS {
        let p = out.join(name);
        if p.exists() {
            std::fs::remove_file(&p).map_err(HarnessError::io(&p))?;
        }
    }
    run_stages(config, llm, &Stage::ALL)
}

/// Runs `stages` in the given order on the artifacts already in `out_dir`.
/// Stores are appended to, so re-running ingest or extract only adds new
/// items.
pub fn run_stages(config: &PipelineConfig, llm: Option<&dyn LlmBackend>, stages: &[Stage]) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let out = config.resolve(&config.out_dir);
    std::fs::create_dir_all(&out).map_err(HarnessError::io(&out))?;
    let needs_llm = llm.is_none() && stages.iter().any(|s| s.uses_llm());
    let mut report = RunReport::new();
    let owned = if needs_llm {
        match build_llm(config) {
            Ok(l) => Some(l),
            Err(message) => {
                let stage = stages.iter().copied().find(|s| s.uses_llm()).unwrap_or(Stage::Extract).name();
                report.status = RunStatus::Failed;
                report.failed_stage = Some(stage.to_string());
                report.error = Some(message.clone());
                write_report(config, &report)?;
                return Err(HarnessError::Stage { stage, message });
            }
        }
    } else {
        None
    };
    let mut run = Run { config, report, llm: llm.or(owned.as_deref()) };
    let mut result = Ok(());
    for &s in stages {
        result = run.stage(s);
        if result.is_err() {
            break;
        }
    }
    if let Err(HarnessError::Stage { stage, message }) = &result {
        run.report.status = RunStatus::Failed;
        run.report.failed_stage = Some(stage.to_string());
        run.report.error = Some(message.clone());
    }
    write_report(config, &run.report)?;
    result.map(|()| run.report)
}

fn write_report(config: &PipelineConfig, report: &RunReport) -> Result<(), HarnessError> {
    let path = config.out_path("run_report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(HarnessError::io(&path))
}

fn build_llm(config: &PipelineConfig) -> Result<Box<dyn LlmBackend>, String> {
    Ok(match &config.llm {
        LlmSettings::Stub { fixtures } => Box::new(StubBackend::load(config.resolve(fixtures)).map_err(|e| e.to_string())?),
        LlmSettings::Http(c) => Box::new(HttpLlmBackend::new(c.clone()).map_err(|e| e.to_string())?),
    })
}

struct Run<'a> {
    config: &'a PipelineConfig,
    report: RunReport,
    llm: Option<&'a dyn LlmBackend>,
}

type StageResult<T> = Result<T, String>;

fn stage_err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Backend errors that retries cannot fix abort the stage.
fn is_fatal(e: &InferenceError) -> bool {
    matches!(e, InferenceError::Backend { source, .. } if !source.is_retryable())
}

impl<'a> Run<'a> {
    fn stage(&mut self, stage: Stage) -> Result<(), HarnessError> {
        let t = Instant::now();
        log::info!("stage {}", stage.name());
        let r = match stage {
            Stage::Ingest => self.ingest(),
            Stage::Extract => self.extract(),
            Stage::Enrich => self.enrich(),
            Stage::Embed => self.embed(),
            Stage::Dedup => self.dedup(),
            Stage::Reinfer => self.reinfer(),
            Stage::Cluster => self.cluster(),
            Stage::Detect => self.detect(),
            Stage::Correlate => self.correlate(),
            Stage::Report => self.reports(),
        };
        self.report.timings.push((stage.name().to_string(), t.elapsed()));
        r.map_err(|message| HarnessError::Stage { stage: stage.name(), message })
    }

    fn llm(&self) -> StageResult<&'a dyn LlmBackend> {
        self.llm.ok_or_else(|| "no language model available".to_string())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_path(name)
    }

    fn set(&mut self, key: &str, n: usize) {
        self.report.counts.insert(key.to_string(), n);
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> StageResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(stage_err)?;
        std::fs::write(self.path(name), text + "\n").map_err(|e| format!("{name}: {e}"))
    }

    fn ingest(&mut self) -> StageResult<()> {
        let c = self.config;
        let connector: Box<dyn SourceConnector> = match &c.source {
            SourceSettings::File { path } => Box::new(FileCorpusConnector::new(c.resolve(path))),
            SourceSettings::Http(h) => Box::new(HttpJsonConnector::new(h.clone()).map_err(stage_err)?),
        };
        let fetcher: Box<dyn PageFetcher> = match &c.pages {
            PagesSettings::None => Box::new(MapPageFetcher::default()),
            PagesSettings::Fixture { path } => Box::new(MapPageFetcher::load(c.resolve(path)).map_err(stage_err)?),
            PagesSettings::Http { timeout_seconds, backoff } => {
                Box::new(HttpPageFetcher::new(StdDuration::from_secs(*timeout_seconds), *backoff).map_err(stage_err)?)
            }
        };
        // Without page fetching, links are not followed at all.
        let mut assembly = c.assembly;
        if matches!(c.pages, PagesSettings::None) {
            assembly.max_linked_pages = 0;
        }
        let mut store = JsonlStore::<ContentRecord>::open(c.resolve(&c.out_dir)).map_err(stage_err)?;
        let report = ingest(connector.as_ref(), &c.filter, fetcher.as_ref(), &assembly, &mut store, c.as_of).map_err(stage_err)?;
        for s in &report.skipped {
            self.report.failures.push(format!("ingest: source item {} skipped: {}", s.position, s.reason));
        }
        for f in &report.fetch_failures {
            self.report.failures.push(format!("ingest: page {} not fetched: {}", f.url, f.reason));
        }
        self.set("records", store.len());
        self.set("posts_skipped", report.skipped.len());
        self.set("posts_discarded", report.discarded.len());
        self.set("page_fetch_failures", report.fetch_failures.len());
        self.write_json("ingest_report.json", &report)
    }

    fn records(&self) -> StageResult<BTreeMap<String, ContentRecord>> {
        let records: Vec<ContentRecord> = load_live(self.path("records.jsonl")).map_err(stage_err)?;
        Ok(records.into_iter().map(|r| (r.record_id.clone(), r)).collect())
    }

    fn retriever(&self) -> StageResult<Option<Box<dyn RetrievalClient>>> {
        let c = self.config;
        Ok(match &c.retrieval {
            RetrievalSettings::None => None,
            RetrievalSettings::Fixture { path } => Some(Box::new(FixtureRetriever::load(c.resolve(path)).map_err(stage_err)?)),
            RetrievalSettings::Http { base_url, timeout_seconds } => {
                Some(Box::new(HttpSummaryRetriever::new(base_url.clone(), StdDuration::from_secs(*timeout_seconds)).map_err(stage_err)?))
            }
        })
    }

    fn extract(&mut self) -> StageResult<()> {
        let c = self.config;
        let records = self.records()?;
        let list: Vec<&ContentRecord> = records.values().collect();
        let llm = self.llm()?;
        let results = crate::parallel::bounded_map(&list, c.inference.parallelism, |_, r| extract_events(r, llm, &c.inference));
        let mut store = JsonlStore::<EventAbstraction>::open(c.resolve(&c.out_dir)).map_err(stage_err)?;
        let mut drafts = 0;
        for (record, result) in list.iter().zip(results) {
            match result {
                Ok(ds) => {
                    for d in ds {
                        drafts += 1;
                        match build_event(&d, record, c.inference.default_utc_offset_minutes) {
                            Ok(e) if store.get(&e.event_id).is_none() => {
                                store.append(e).map_err(stage_err)?;
                            }
                            Ok(_) => {}
                            Err(e) => self.report.failures.push(format!("extract: {}: {e}", record.record_id)),
                        }
                    }
                }
                Err(e) if is_fatal(&e) => return Err(e.to_string()),
                Err(e) => self.report.failures.push(format!("extract: {e}")),
            }
        }
        self.set("drafts", drafts);
        self.set("events_extracted", store.len());
        Ok(())
    }

    fn append_runs(&self, runs: &[InferenceRun]) -> StageResult<()> {
        let path = self.path("inference_runs.jsonl");
        let mut all: Vec<InferenceRun> = if path.exists() { read_jsonl(&path).map_err(stage_err)? } else { Vec::new() };
        all.extend_from_slice(runs);
        write_jsonl(&path, &all).map_err(stage_err)
    }

    /// Enriches `events` and replaces them in the store; returns how many
    /// were updated.
    fn enrich_into(&mut self, events: &[EventAbstraction], stale_only: bool, label: &str) -> StageResult<usize> {
        let c = self.config;
        let records = self.records()?;
        let retriever = self.retriever()?;
        let results = enrich_events(events, &records, self.llm()?, retriever.as_deref(), stale_only, &c.inference);
        let mut store = JsonlStore::<EventAbstraction>::open(c.resolve(&c.out_dir)).map_err(stage_err)?;
        let mut runs = Vec::new();
        let mut updated = 0;
        for (e, r) in events.iter().zip(results) {
            match r {
                Ok((enriched, rs)) => {
                    store.replace(enriched).map_err(stage_err)?;
                    runs.extend(rs);
                    updated += 1;
                }
                Err(err) if is_fatal(&err) => return Err(err.to_string()),
                Err(err) => self.report.failures.push(format!("{label}: event {}: {err}", e.event_id)),
            }
        }
        let failed_fields = runs.iter().filter(|r| r.consensus_value.is_failed()).count();
        let key = format!("{label}_failed_fields");
        self.set(&key, failed_fields);
        self.append_runs(&runs)?;
        Ok(updated)
    }

    fn enrich(&mut self) -> StageResult<()> {
        let events: Vec<EventAbstraction> = load_live(self.path("events.jsonl")).map_err(stage_err)?;
        let n = self.enrich_into(&events, false, "enrich")?;
        self.set("events_enriched", n);
        Ok(())
    }

    fn embedder(&self) -> StageResult<Box<dyn Embedder>> {
        Ok(match &self.config.embedder {
            EmbedderSettings::Hashing { dimension, seed } => Box::new(HashingEmbedder { dimension: *dimension, seed: *seed }),
            EmbedderSettings::Http(h) => Box::new(HttpEmbedder::new(h.clone()).map_err(stage_err)?),
        })
    }

    fn embed_live(&mut self, label: &str) -> StageResult<Vec<EventEmbedding>> {
        let events: Vec<EventAbstraction> = load_live(self.path("events.jsonl")).map_err(stage_err)?;
        let embedder = self.embedder()?;
        let (ok, failed) = embed_events(&events, embedder.as_ref(), self.config.inference.parallelism, 2);
        for f in &failed {
            self.report.failures.push(format!("{label}: event {} not embedded: {}", f.event_id, f.reason));
        }
        write_jsonl(self.path("embeddings.jsonl"), &ok).map_err(stage_err)?;
        Ok(ok)
    }

    fn embed(&mut self) -> StageResult<()> {
        let n = self.embed_live("embed")?.len();
        self.set("events_embedded", n);
        Ok(())
    }

    fn dedup(&mut self) -> StageResult<()> {
        let c = self.config;
        let embeddings: Vec<EventEmbedding> = read_jsonl(self.path("embeddings.jsonl")).map_err(stage_err)?;
        let by_id: BTreeMap<String, EventEmbedding> = embeddings.into_iter().map(|e| (e.event_id.clone(), e)).collect();
        let mut store = JsonlStore::<EventAbstraction>::open(c.resolve(&c.out_dir)).map_err(stage_err)?;
        let report = dedup_pass(&mut store, &by_id, c.dedup_threshold).map_err(stage_err)?;
        self.set("duplicate_groups", report.groups.len());
        self.set("events_after_dedup", report.events_after);
        self.write_json("dedup_report.json", &report)
    }

    fn reinfer(&mut self) -> StageResult<()> {
        let events: Vec<EventAbstraction> = load_live(self.path("events.jsonl")).map_err(stage_err)?;
        let stale: Vec<EventAbstraction> =
            events.into_iter().filter(|e| e.stale_fields.iter().any(|f| f != "semantic_signature")).collect();
        let n = self.enrich_into(&stale, true, "reinfer")?;
        self.set("events_reinferred", n);
        Ok(())
    }

    fn cluster(&mut self) -> StageResult<()> {
        let c = self.config;
        let embeddings = self.embed_live("cluster")?;
        if embeddings.is_empty() {
            self.set("events_clustered", 0);
            return Ok(());
        }
        let (signatures, model) = cluster_multilevel(&embeddings, &c.cluster.levels, c.cluster.seed).map_err(stage_err)?;
        model.save(self.path("clusters.json")).map_err(stage_err)?;
        let mut store = JsonlStore::<EventAbstraction>::open(c.resolve(&c.out_dir)).map_err(stage_err)?;
        let mut events: Vec<EventAbstraction> = store.records().to_vec();
        events.sort_by(|a, b| a.event_id.cmp(&b.event_id));
        for mut e in events {
            if let Some(sig) = signatures.get(&e.event_id) {
                e.semantic_signature = Some(sig.clone());
                e.stale_fields.retain(|f| f != "semantic_signature");
                store.replace(e).map_err(stage_err)?;
            }
        }
        self.set("events_clustered", signatures.len());
        Ok(())
    }

    fn zscores(&self) -> StageResult<Vec<ZSeries>> {
        let c = self.config;
        let b = c.baseline;
        let mut series = read_traffic_csv(c.resolve(&c.traffic)).map_err(stage_err)?;
        series.sort_by(|a, b| a.network_id.cmp(&b.network_id));
        let scored = crate::parallel::bounded_map(&series, series.len().max(1), |_, s| {
            score_rolling(s, b.window_weeks, b.bin_minutes, b.std_floor_fraction)
        });
        scored.into_iter().collect::<Result<Vec<_>, _>>().map_err(stage_err)
    }

    fn detect(&mut self) -> StageResult<()> {
        let c = self.config;
        let zs = self.zscores()?;
        let mut store = JsonlStore::<SpikeRecord>::open(c.resolve(&c.out_dir)).map_err(stage_err)?;
        for z in &zs {
            for s in detect_spikes(z, &c.detection).map_err(stage_err)? {
                store.append(s).map_err(stage_err)?;
            }
        }
        self.set("networks", zs.len());
        self.set("spikes", store.len());
        Ok(())
    }

    fn correlate(&mut self) -> StageResult<()> {
        let events: Vec<EventAbstraction> = load_live(self.path("events.jsonl")).map_err(stage_err)?;
        let spikes: Vec<SpikeRecord> = load_live(self.path("spikes.jsonl")).map_err(stage_err)?;
        let (matches, skipped) = match_spikes_to_events(&spikes, &events, &self.config.matching).map_err(stage_err)?;
        write_jsonl(self.path("matches.jsonl"), &matches).map_err(stage_err)?;
        let matched_spikes: BTreeSet<&str> = matches.iter().map(|m| m.spike.spike_id.as_str()).collect();
        self.set("matches", matches.len());
        self.set("spikes_matched", matched_spikes.len());
        self.set("events_unmatchable", skipped.len());
        Ok(())
    }

    fn reports(&mut self) -> StageResult<()> {
        let c = self.config;
        let events: Vec<EventAbstraction> = load_live(self.path("events.jsonl")).map_err(stage_err)?;
        let spikes: Vec<SpikeRecord> = load_live(self.path("spikes.jsonl")).map_err(stage_err)?;
        let matches: Vec<SpikeEventMatch> = read_jsonl(self.path("matches.jsonl")).map_err(stage_err)?;

        let lead = lead_time_cdf(&events, &c.lead_time);
        self.write_json("lead_time.json", &lead)?;
        write_lead_time_csv(create(&self.path("lead_time.csv"))?, &lead).map_err(stage_err)?;

        let freq = spike_frequency(&spikes, &c.spike_frequency_bins).map_err(stage_err)?;
        write_spike_frequency_csv(create(&self.path("spike_frequency.csv"))?, &freq).map_err(stage_err)?;

        let regions: RegionMap = match &c.regions {
            Some(p) => {
                let p = c.resolve(p);
                let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => RegionMap::new(),
        };
        let zs = self.zscores()?;
        let rows = export_features(&events, &spikes, &zs, &regions, &c.features).map_err(stage_err)?;
        write_features_csv(create(&self.path("features.csv"))?, &rows, c.cluster.levels.len()).map_err(stage_err)?;
        self.set("feature_rows", rows.len());

        if let Some(labels) = &c.labels {
            let plants: Vec<PlantLabel> = read_jsonl(c.resolve(labels)).map_err(stage_err)?;
            let summary = coverage_summary(&plants, &spikes, &matches, &events);
            self.write_json("coverage.json", &summary)?;
            self.report.coverage = Some(summary);
        }
        Ok(())
    }
}

fn create(path: &Path) -> StageResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let text = r#"{
            "out_dir": "out",
            "as_of": "2025-04-14T00:00:00Z",
            "source": {"kind": "file", "path": "posts.jsonl"},
            "filter": {"communities": ["sports"]},
            "llm": {"kind": "stub", "fixtures": "f.json"},
            "traffic": "traffic.csv"
        }"#;
        let cfg: PipelineConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.pages, PagesSettings::None);
        assert_eq!(cfg.cluster.levels, DEFAULT_LEVELS.to_vec());
        assert_eq!(cfg.dedup_threshold, DEFAULT_SIM_THRESHOLD);
        let again: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"out_dir": "o", "as_of": "2025-04-14T00:00:00Z", "source": {"kind": "file", "path": "p"},
            "filter": {"communities": ["x"]}, "llm": {"kind": "stub", "fixtures": "f"}, "traffic": "t", "trafic": "t"}"#;
        assert!(serde_json::from_str::<PipelineConfig>(text).is_err());
    }
}
