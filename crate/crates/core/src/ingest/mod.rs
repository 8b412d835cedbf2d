//! Collecting discussion threads and turning them into cleaned
//! [`ContentRecord`]s.

mod clean;
mod connector;
mod fetch;

pub use clean::{clean_text, normalize_whitespace, truncate_chars, TextFormat, MAX_LINK_DENSITY};
pub use connector::{
    list_posts, Backoff, FileCorpusConnector, FilterConfig, HttpConnectorConfig, HttpJsonConnector, Listing,
    RawComment, RawPost, SkippedItem, SourceBatch, SourceConnector, TokenBucket,
};
pub use fetch::{fetch_linked_pages, FetchFailure, FetchedPage, HttpPageFetcher, MapPageFetcher, PageFetcher, PAGE_CHAR_CAP};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{ContentRecord, LinkedText, SourceKind};
use crate::store::{JsonlStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("ingest configuration: {0}")]
    Config(String),
    #[error("source error: {message}")]
    Source { retryable: bool, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl IngestError {
    pub fn is_retryable(&self) -> bool {
        match self {
            IngestError::Source { retryable, .. } => *retryable,
            IngestError::Store(e) => e.is_retryable(),
            IngestError::Config(_) => false,
        }
    }
}

/// Character budgets for record assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    /// Comments kept per thread, highest score first.
    pub top_k_comments: usize,
    pub max_comment_chars: usize,
    /// Total budget for body, comments and linked pages, spent in that order.
    pub max_record_chars: usize,
    pub max_linked_pages: usize,
    pub fetch_parallelism: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self { top_k_comments: 20, max_comment_chars: 2_000, max_record_chars: 60_000, max_linked_pages: 5, fetch_parallelism: 4 }
    }
}

/// Record id derived from a post id, stable across re-ingestion.
pub fn record_id_for(post_id: &str) -> String {
    format!("rec-{post_id}")
}

/// Builds a cleaned record from a post and its fetched pages. Returns `None`
/// when nothing survives cleaning.
pub fn assemble_content_record(
    post: &RawPost,
    pages: &[FetchedPage],
    config: &AssemblyConfig,
    fetched_at: DateTime<Utc>,
) -> Option<ContentRecord> {
    let mut budget = config.max_record_chars;
    let mut take = |text: String| -> String {
        let t = truncate_chars(&text, budget);
        budget -= t.chars().count().min(budget);
        t
    };

    let body_text = take(clean_text(&post.body, TextFormat::Markdown, usize::MAX));

    let mut ranked: Vec<&RawComment> = post.comments_raw.iter().collect();
    ranked.sort_by(|a, b| b.score.cmp(&a.score));
    let mut comments = Vec::new();
    for c in ranked.into_iter().take(config.top_k_comments) {
        let text = take(clean_text(&c.body, TextFormat::Markdown, config.max_comment_chars));
        if !text.is_empty() {
            comments.push(text);
        }
    }

    let mut linked_texts = Vec::new();
    for p in pages {
        let text = take(p.text.clone());
        if !text.is_empty() {
            linked_texts.push(LinkedText { url: p.url.clone(), text });
        }
    }

    let record = ContentRecord {
        record_id: record_id_for(&post.post_id),
        source: SourceKind::ForumThread,
        url: post.url.clone(),
        created_at: post.created_at,
        fetched_at: fetched_at.max(post.created_at),
        title: normalize_whitespace(&post.title),
        body_text,
        comments,
        engagement: post.score.max(0) as u64,
        linked_texts,
    };
    record.validate().is_ok().then_some(record)
}

/// Outcome of one ingestion pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub stored: Vec<String>,
    pub already_present: Vec<String>,
    pub skipped: Vec<SkippedItem>,
    pub discarded: Vec<String>,
    pub fetch_failures: Vec<FetchFailure>,
}

/// Lists, filters, fetches and assembles posts, appending new records to
/// `store`. Posts whose record already exists are left untouched.
pub fn ingest(
    connector: &dyn SourceConnector,
    filter: &FilterConfig,
    fetcher: &dyn PageFetcher,
    config: &AssemblyConfig,
    store: &mut JsonlStore<ContentRecord>,
    fetched_at: DateTime<Utc>,
) -> Result<IngestReport, IngestError> {
    let listing = list_posts(connector, filter)?;
    let mut report = IngestReport { skipped: listing.skipped, ..Default::default() };
    for post in &listing.posts {
        let id = record_id_for(&post.post_id);
        if store.get(&id).is_some() {
            report.already_present.push(id);
            continue;
        }
        let (pages, failures) = fetch_linked_pages(post, fetcher, config.max_linked_pages, config.fetch_parallelism);
        report.fetch_failures.extend(failures);
        match assemble_content_record(post, &pages, config, fetched_at) {
            Some(record) => {
                store.append(record)?;
                report.stored.push(id);
            }
            None => report.discarded.push(post.post_id.clone()),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn post() -> RawPost {
        RawPost {
            post_id: "abc".into(),
            community: "television".into(),
            title: "  Season   finale ".into(),
            body: "Airs **Sunday**".into(),
            score: 120,
            url: "https://forum.example/abc".into(),
            outbound_urls: vec![],
            comments_raw: vec![
                RawComment { body: "low".into(), score: 1 },
                RawComment { body: "high".into(), score: 50 },
                RawComment { body: "mid".into(), score: 10 },
                RawComment { body: "also mid".into(), score: 10 },
            ],
            created_at: Utc.with_ymd_and_hms(2025, 5, 1, 10, 0, 0).unwrap(),
        }
    }

    fn at() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 5, 2, 0, 0, 0).unwrap()
    }

    #[test]
    fn comments_ranked_and_capped() {
        let cfg = AssemblyConfig { top_k_comments: 3, ..Default::default() };
        let r = assemble_content_record(&post(), &[], &cfg, at()).unwrap();
        assert_eq!(r.record_id, "rec-abc");
        assert_eq!(r.title, "Season finale");
        assert_eq!(r.body_text, "Airs Sunday");
        assert_eq!(r.comments, vec!["high", "mid", "also mid"]);
        assert_eq!(r.engagement, 120);
    }

    #[test]
    fn budget_spent_in_order() {
        let cfg = AssemblyConfig { max_record_chars: 14, ..Default::default() };
        let pages = vec![FetchedPage { url: "https://x".into(), text: "page".into() }];
        let r = assemble_content_record(&post(), &pages, &cfg, at()).unwrap();
        assert_eq!(r.body_text, "Airs Sunday");
        assert_eq!(r.comments, vec!["hig"]);
        assert!(r.linked_texts.is_empty());
    }

    #[test]
    fn empty_record_discarded() {
        let mut p = post();
        p.body = "![img](x.png)".into();
        p.comments_raw.clear();
        assert!(assemble_content_record(&p, &[], &AssemblyConfig::default(), at()).is_none());
    }

    #[test]
    fn reingest_is_idempotent() {
        struct One(RawPost);
        impl SourceConnector for One {
            fn name(&self) -> &str {
                "one"
            }
            fn fetch_batch(&self) -> Result<SourceBatch, IngestError> {
                Ok(SourceBatch { posts: vec![self.0.clone()], skipped: vec![] })
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let mut store = JsonlStore::<ContentRecord>::open(dir.path()).unwrap();
        let filter = FilterConfig { search_terms: vec!["finale".into()], communities: vec![], min_engagement: 50, require_outbound_link: false };
        let fetcher = MapPageFetcher::default();
        let r1 = ingest(&One(post()), &filter, &fetcher, &AssemblyConfig::default(), &mut store, at()).unwrap();
        let r2 = ingest(&One(post()), &filter, &fetcher, &AssemblyConfig::default(), &mut store, at()).unwrap();
        assert_eq!(r1.stored, vec!["rec-abc"]);
        assert_eq!(r2.already_present, vec!["rec-abc"]);
        assert_eq!(store.len(), 1);
    }
}
