//! Event embeddings, duplicate merging and multi-level clustering.

mod embed;
mod kmeans;

pub use embed::{
    embed_event, embed_events, fnv1a, tokenize, EmbedFailure, Embedder, EventEmbedding, HashingEmbedder, HttpEmbedder,
    HttpEmbedderConfig,
};
pub use kmeans::{kmeans, kmeans_best_of, sq_dist, ClusterModel, KmeansResult, DEFAULT_MAX_ITERS};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::inference::{inferred_fields, FieldName};
use crate::model::{EventAbstraction, SemanticSignature};
use crate::parallel::bounded_map;
use crate::store::{JsonlStore, StoreError};

pub const DEFAULT_SIM_THRESHOLD: f64 = 0.90;
pub const DEFAULT_LEVELS: [usize; 4] = [10, 100, 1000, 10000];

#[derive(Debug, thiserror::Error)]
pub enum SemanticsError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("no tokens to embed")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("no points to cluster")]
    Empty,
    #[error("embedding backend: {0}")]
    Backend(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cluster model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cluster model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// `a·b / (|a||b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SemanticsError> {
    if a.len() != b.len() {
        return Err(SemanticsError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(SemanticsError::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components (size ≥ 2) of the graph joining same-date events
/// whose embeddings have cosine ≥ `threshold`. Events without an embedding
/// are ignored. Groups are sorted internally and by first id.
pub fn find_duplicates(
    events: &[EventAbstraction],
    embeddings: &BTreeMap<String, EventEmbedding>,
    threshold: f64,
) -> Result<Vec<Vec<String>>, SemanticsError> {
    let mut buckets: BTreeMap<&str, Vec<(&str, &[f64])>> = BTreeMap::new();
    let mut dim = None;
    for e in events {
        let Some(emb) = embeddings.get(&e.event_id) else { continue };
        match dim {
            None => dim = Some(emb.vector.len()),
            Some(d) if d != emb.vector.len() => return Err(SemanticsError::DimensionMismatch { expected: d, found: emb.vector.len() }),
            _ => {}
        }
        buckets.entry(e.date.as_str()).or_default().push((e.event_id.as_str(), &emb.vector));
    }
    let mut groups = Vec::new();
    for members in buckets.values() {
        let mut uf = UnionFind((0..members.len()).collect());
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                if cosine_similarity(members[i].1, members[j].1)? >= threshold {
                    uf.union(i, j);
                }
            }
        }
        let mut comps: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for i in 0..members.len() {
            let root = uf.find(i);
            comps.entry(root).or_default().push(members[i].0.to_string());
        }
        groups.extend(comps.into_values().filter(|g| g.len() >= 2).map(|mut g| {
            g.sort();
            g
        }));
    }
    groups.sort();
    Ok(groups)
}

/// Field names marked stale on a merge survivor.
pub fn merge_stale_fields() -> Vec<String> {
    inferred_fields().map(|s| s.field_name.as_str().to_string()).chain([FieldName::SemanticSignature.as_str().to_string()]).collect()
}

/// Folds a duplicate group into its earliest-mentioned member and commits
/// the result atomically.
pub fn merge_events(group: &[String], store: &mut JsonlStore<EventAbstraction>) -> Result<EventAbstraction, SemanticsError> {
    let unique: BTreeSet<&String> = group.iter().collect();
    if unique.len() < 2 {
        return Err(SemanticsError::Precondition("a merge needs at least two distinct events".into()));
    }
    let mut members = Vec::with_capacity(unique.len());
    for id in unique {
        members.push(store.get(id).cloned().ok_or_else(|| StoreError::UnknownId(id.clone()))?);
    }
    if members.iter().any(|m| m.date != members[0].date) {
        return Err(SemanticsError::Precondition("merged events must share a date".into()));
    }
    members.sort_by(|a, b| a.first_mentioned_at.cmp(&b.first_mentioned_at).then_with(|| a.event_id.cmp(&b.event_id)));
    let mut survivor = members[0].clone();
    let mut records: BTreeSet<String> = BTreeSet::new();
    let mut absorbed = Vec::new();
    for m in &members {
        records.extend(m.source_records.iter().cloned());
    }
    for m in &members[1..] {
        absorbed.push(m.event_id.clone());
        survivor.merge_history.push(m.event_id.clone());
        survivor.merge_history.extend(m.merge_history.iter().cloned());
    }
    survivor.source_records = records.into_iter().collect();
    survivor.first_mentioned_at = members.iter().map(|m| m.first_mentioned_at).min().unwrap_or(survivor.first_mentioned_at);
    survivor.stale_fields = merge_stale_fields();
    store.commit_merge(survivor.clone(), &absorbed)?;
    Ok(survivor)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub groups: Vec<Vec<String>>,
    pub survivors: Vec<String>,
    pub events_before: usize,
    pub events_after: usize,
}

/// Finds all duplicate groups among live events and merges each.
pub fn dedup_pass(
    store: &mut JsonlStore<EventAbstraction>,
    embeddings: &BTreeMap<String, EventEmbedding>,
    threshold: f64,
) -> Result<DedupReport, SemanticsError> {
    let events_before = store.len();
    let groups = find_duplicates(store.records(), embeddings, threshold)?;
    let mut survivors = Vec::with_capacity(groups.len());
    for g in &groups {
        survivors.push(merge_events(g, store)?.event_id);
    }
    Ok(DedupReport { groups, survivors, events_before, events_after: store.len() })
}

/// Persisted clustering of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLevelModel {
    pub requested_levels: Vec<usize>,
    pub models: Vec<ClusterModel>,
}

impl MultiLevelModel {
    /// Signature of a new point by nearest centroid at every level.
    pub fn signature(&self, point: &[f64]) -> SemanticSignature {
        SemanticSignature {
            levels: self.models.iter().map(|m| m.level_k).collect(),
            cluster_ids: self.models.iter().map(|m| m.assign(point)).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SemanticsError> {
        std::fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SemanticsError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Independent k-means per level over embeddings sorted by event id.
pub fn cluster_multilevel(
    embeddings: &[EventEmbedding],
    levels: &[usize],
    seed: u64,
) -> Result<(BTreeMap<String, SemanticSignature>, MultiLevelModel), SemanticsError> {
    if embeddings.is_empty() {
        return Err(SemanticsError::Empty);
    }
    if levels.is_empty() || levels.contains(&0) {
        return Err(SemanticsError::Config("levels must be non-empty and positive".into()));
    }
    let mut sorted: Vec<&EventEmbedding> = embeddings.iter().collect();
    sorted.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    let points: Vec<Vec<f64>> = sorted.iter().map(|e| e.vector.clone()).collect();
    let results = bounded_map(levels, levels.len(), |_, &k| kmeans(&points, k, seed, DEFAULT_MAX_ITERS));
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut signatures = BTreeMap::new();
    for (i, e) in sorted.iter().enumerate() {
        signatures.insert(
            e.event_id.clone(),
            SemanticSignature {
                levels: results.iter().map(|r| r.model.level_k).collect(),
                cluster_ids: results.iter().map(|r| r.assignments[i]).collect(),
            },
        );
    }
    let model = MultiLevelModel { requested_levels: levels.to_vec(), models: results.into_iter().map(|r| r.model).collect() };
    Ok((signatures, model))
}
