//! Reference-article retrieval for grounding field inference.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ingest::{clean_text, TextFormat};
use crate::model::EventAbstraction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub title: String,
    pub summary: String,
    pub url: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub event_id: String,
    pub retrieved_docs: Vec<RetrievedDoc>,
}

impl ContextBundle {
    /// Text block inserted into prompts.
    pub fn render(&self) -> String {
        if self.retrieved_docs.is_empty() {
            return "(none)".into();
        }
        self.retrieved_docs.iter().map(|d| format!("## {}\n{}", d.title, d.summary)).collect::<Vec<_>>().join("\n\n")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("retrieval failed: {0}")]
pub struct RetrievalError(pub String);

/// Looks up reference articles for a free-text query.
pub trait RetrievalClient: Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<RetrievedDoc>, RetrievalError>;
}

/// Queries for an event: each entity, then the description.
pub fn build_queries(event: &EventAbstraction) -> Vec<String> {
    let mut queries: Vec<String> = event.entities.iter().flatten().map(|e| e.trim().to_string()).filter(|e| !e.is_empty()).collect();
    let d = event.description.trim();
    if !d.is_empty() {
        queries.push(d.to_string());
    }
    queries.dedup();
    queries
}

/// Retrieves up to `max_docs` distinct articles, cleaned and cut to
/// `doc_char_cap` characters. Retrieval errors yield an empty bundle.
pub fn enrich_with_context(
    event: &EventAbstraction,
    retriever: &dyn RetrievalClient,
    max_docs: usize,
    doc_char_cap: usize,
) -> ContextBundle {
    let mut bundle = ContextBundle { event_id: event.event_id.clone(), retrieved_docs: Vec::new() };
    for q in build_queries(event) {
        if bundle.retrieved_docs.len() >= max_docs {
            break;
        }
        let docs = match retriever.search(&q, max_docs) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("event {}: {e}; continuing without context", event.event_id);
                return ContextBundle { event_id: event.event_id.clone(), retrieved_docs: Vec::new() };
            }
        };
        for d in docs {
            if bundle.retrieved_docs.len() >= max_docs {
                break;
            }
            if bundle.retrieved_docs.iter().any(|x| x.url == d.url) {
                continue;
            }
            let summary = clean_text(&d.summary, TextFormat::Html, doc_char_cap);
            if !summary.is_empty() {
                bundle.retrieved_docs.push(RetrievedDoc { title: d.title, summary, url: d.url });
            }
        }
    }
    bundle
}

/// In-memory article set ranked by token overlap with the query.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureRetriever {
    pub docs: Vec<RetrievedDoc>,
}

fn tokens(s: &str) -> Vec<String> {
    s.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

impl FixtureRetriever {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RetrievalError(format!("{}: {e}", path.display())))?;
        let docs = serde_json::from_str(&text).map_err(|e| RetrievalError(format!("{}: {e}", path.display())))?;
        Ok(Self { docs })
    }

    /// Title token hits count double; ties keep fixture order.
    fn score(&self, query: &[String], doc: &RetrievedDoc) -> usize {
        let title = tokens(&doc.title);
        let summary = tokens(&doc.summary);
        query.iter().map(|q| 2 * usize::from(title.contains(q)) + usize::from(summary.contains(q))).sum()
    }
}

impl RetrievalClient for FixtureRetriever {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<RetrievedDoc>, RetrievalError> {
        let q = tokens(query);
        let mut scored: Vec<(usize, usize)> =
            self.docs.iter().enumerate().map(|(i, d)| (self.score(&q, d), i)).filter(|(s, _)| *s > 0).collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(limit).map(|(_, i)| self.docs[i].clone()).collect())
    }
}

/// Encyclopedia page-summary endpoint: `GET {base_url}/{title}` returning
/// `{"title", "extract", "content_urls": {"desktop": {"page"}}}`.
pub struct HttpSummaryRetriever {
    base_url: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct SummaryResponse {
    title: String,
    #[serde(default)]
    extract: String,
    #[serde(default)]
    content_urls: Option<ContentUrls>,
}

#[derive(Deserialize)]
struct ContentUrls {
    desktop: Option<PageUrl>,
}

#[derive(Deserialize)]
struct PageUrl {
    page: String,
}

impl HttpSummaryRetriever {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("eventspike/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| RetrievalError(e.to_string()))?;
        Ok(Self { base_url: base_url.into().trim_end_matches('/').to_string(), client })
    }
}

impl RetrievalClient for HttpSummaryRetriever {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<RetrievedDoc>, RetrievalError> {
        if limit == 0 {
            return Ok(vec![]);
        }
        let title = query.trim().replace(' ', "_");
        let mut url = reqwest::Url::parse(&self.base_url).map_err(|e| RetrievalError(e.to_string()))?;
        url.path_segments_mut().map_err(|_| RetrievalError("base url cannot carry a path".into()))?.push(&title);
        let resp = self.client.get(url.clone()).send().map_err(|e| RetrievalError(e.to_string()))?;
        if resp.status().as_u16() == 404 {
            return Ok(vec![]);
        }
        if !resp.status().is_success() {
            return Err(RetrievalError(format!("HTTP {}", resp.status())));
        }
        let s: SummaryResponse = resp.json().map_err(|e| RetrievalError(e.to_string()))?;
        let page = s.content_urls.and_then(|c| c.desktop).map(|d| d.page).unwrap_or_else(|| url.to_string());
        Ok(vec![RetrievedDoc { title: s.title, summary: s.extract, url: page }])
    }
}
