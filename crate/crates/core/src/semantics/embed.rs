//! Text embedding backends.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SemanticsError;
use crate::model::EventAbstraction;
use crate::parallel::bounded_map;

/// Maps text to a fixed-dimension vector.
pub trait Embedder: Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, SemanticsError>;
}

/// Deterministic embedder: a sum of per-token Gaussian random projections.
///
/// Each lowercase alphanumeric token seeds a ChaCha stream through its
/// FNV-1a hash, so the vector depends only on the token multiset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dimension: 256, seed: 0 }
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SemanticsError> {
        let mut toks = tokenize(text);
        if toks.is_empty() {
            return Err(SemanticsError::EmptyText);
        }
        toks.sort_unstable();
        let mut v = vec![0.0; self.dimension];
        for t in toks {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(t.as_bytes()) ^ self.seed);
            for x in v.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x += g;
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub dimension: usize,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
}

fn default_timeout() -> u64 {
    60
}

/// `POST {model, input}` returning `{"vector": [...]}`.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self, SemanticsError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build()
            .map_err(|e| SemanticsError::Backend(e.to_string()))?;
        Ok(Self { config, client })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SemanticsError> {
        let resp = self
            .client
            .post(&self.config.endpoint_url)
            .json(&EmbedRequest { model: &self.config.model_name, input: text })
            .send()
            .map_err(|e| SemanticsError::Backend(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(SemanticsError::Backend(format!("HTTP {}", resp.status())));
        }
        let body: EmbedResponse = resp.json().map_err(|e| SemanticsError::Backend(e.to_string()))?;
        if body.vector.len() != self.config.dimension {
            return Err(SemanticsError::DimensionMismatch { expected: self.config.dimension, found: body.vector.len() });
        }
        Ok(body.vector)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEmbedding {
    pub event_id: String,
    pub vector: Vec<f64>,
    pub norm: f64,
}

/// Embeds the event's summary text.
pub fn embed_event(event: &EventAbstraction, embedder: &dyn Embedder) -> Result<EventEmbedding, SemanticsError> {
    if event.description.trim().is_empty() {
        return Err(SemanticsError::Precondition(format!("event {} has no description", event.event_id)));
    }
    let vector = embedder.embed(&event.summary_text())?;
    if vector.len() != embedder.dimension() {
        return Err(SemanticsError::DimensionMismatch { expected: embedder.dimension(), found: vector.len() });
    }
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(SemanticsError::ZeroNorm);
    }
    Ok(EventEmbedding { event_id: event.event_id.clone(), vector, norm })
}

/// An event left without an embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedFailure {
    pub event_id: String,
    pub reason: String,
}

/// Embeds events with bounded parallelism, retrying backend errors up to
/// `retries` times. Events that still fail are reported, not embedded.
pub fn embed_events(
    events: &[EventAbstraction],
    embedder: &dyn Embedder,
    parallelism: usize,
    retries: u32,
) -> (Vec<EventEmbedding>, Vec<EmbedFailure>) {
    let results = bounded_map(events, parallelism, |_, e| {
        let mut tries = 0;
        loop {
            match embed_event(e, embedder) {
                Err(SemanticsError::Backend(msg)) if tries < retries => {
                    log::warn!("embedding {}: {msg}; retrying", e.event_id);
                    tries += 1;
                }
                other => return other,
            }
        }
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (e, r) in events.iter().zip(results) {
        match r {
            Ok(emb) => ok.push(emb),
            Err(err) => {
                log::warn!("event {} not embedded: {err}", e.event_id);
                failed.push(EmbedFailure { event_id: e.event_id.clone(), reason: err.to_string() });
            }
        }
    }
    (ok, failed)
}
