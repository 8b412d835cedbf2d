//! Discussion sources and post filtering.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::IngestError;

/// A comment as delivered by a source. Bare strings are accepted as
/// score-0 comments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "CommentRepr")]
pub struct RawComment {
    pub body: String,
    pub score: i64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CommentRepr {
    Plain(String),
    Scored { body: String, #[serde(default)] score: i64 },
}

impl From<CommentRepr> for RawComment {
    fn from(c: CommentRepr) -> Self {
        match c {
            CommentRepr::Plain(body) => RawComment { body, score: 0 },
            CommentRepr::Scored { body, score } => RawComment { body, score },
        }
    }
}

/// A discussion thread as returned by a connector, before cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub post_id: String,
    pub community: String,
    pub title: String,
    /// Markdown body.
    #[serde(default)]
    pub body: String,
    pub score: i64,
    /// Permalink of the thread.
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub outbound_urls: Vec<String>,
    /// Top-level comments (markdown).
    #[serde(default)]
    pub comments_raw: Vec<RawComment>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    #[serde(default)]
    pub search_terms: Vec<String>,
    #[serde(default)]
    pub communities: Vec<String>,
    #[serde(default)]
    pub min_engagement: i64,
    #[serde(default)]
    pub require_outbound_link: bool,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.search_terms.iter().all(|t| t.trim().is_empty()) && self.communities.iter().all(|c| c.trim().is_empty()) {
            return Err(IngestError::Config("at least one search term or community is required".into()));
        }
        if self.min_engagement < 0 {
            return Err(IngestError::Config(format!("min_engagement {} must be >= 0", self.min_engagement)));
        }
        Ok(())
    }

    /// The filter predicate: topical match, engagement, outbound link.
    pub fn accepts(&self, post: &RawPost) -> bool {
        let title = post.title.to_lowercase();
        let body = post.body.to_lowercase();
        let term_hit = self.search_terms.iter().map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()).any(|t| title.contains(&t) || body.contains(&t));
        let community = community_key(&post.community);
        let community_hit = self.communities.iter().any(|c| community_key(c) == community);
        (term_hit || community_hit)
            && post.score >= self.min_engagement
            && (!self.require_outbound_link || post.outbound_urls.iter().any(|u| !u.trim().is_empty()))
    }
}

fn community_key(c: &str) -> String {
    let c = c.trim().to_lowercase();
    c.strip_prefix("r/").or_else(|| c.strip_prefix("/r/")).unwrap_or(&c).to_string()
}

/// Why a source item was not turned into a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub position: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBatch {
    pub posts: Vec<RawPost>,
    pub skipped: Vec<SkippedItem>,
}

/// A source of discussion threads.
pub trait SourceConnector {
    fn name(&self) -> &str;
    /// Fetches every available post. Malformed items are reported in
    /// `skipped`, never fatal.
    fn fetch_batch(&self) -> Result<SourceBatch, IngestError>;
}

/// Posts surviving the filter plus the connector's skip report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Listing {
    pub posts: Vec<RawPost>,
    pub skipped: Vec<SkippedItem>,
}

/// Fetches from `connector` and keeps the posts accepted by `filter`.
pub fn list_posts(connector: &dyn SourceConnector, filter: &FilterConfig) -> Result<Listing, IngestError> {
    filter.validate()?;
    let batch = connector.fetch_batch()?;
    let mut seen = HashSet::new();
    let mut skipped = batch.skipped;
    let mut posts = Vec::new();
    for (i, post) in batch.posts.into_iter().enumerate() {
        if !seen.insert(post.post_id.clone()) {
            skipped.push(SkippedItem { position: i, reason: format!("duplicate post_id `{}`", post.post_id) });
            continue;
        }
        if filter.accepts(&post) {
            posts.push(post);
        }
    }
    log::info!("{}: {} posts kept, {} items skipped", connector.name(), posts.len(), skipped.len());
    Ok(Listing { posts, skipped })
}

/// JSONL corpus of [`RawPost`]s on disk.
pub struct FileCorpusConnector {
    path: PathBuf,
}

impl FileCorpusConnector {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl SourceConnector for FileCorpusConnector {
    fn name(&self) -> &str {
        "file"
    }

    fn fetch_batch(&self) -> Result<SourceBatch, IngestError> {
        let file = File::open(&self.path).map_err(|e| IngestError::Source { retryable: false, message: format!("{}: {e}", self.path.display()) })?;
        let mut batch = SourceBatch::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| IngestError::Source { retryable: true, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RawPost>(&line) {
                Ok(p) => batch.posts.push(p),
                Err(e) => batch.skipped.push(SkippedItem { position: i + 1, reason: e.to_string() }),
            }
        }
        Ok(batch)
    }
}

/// Token bucket shared across threads.
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(requests_per_minute: u32) -> Self {
        let capacity = requests_per_minute.max(1) as f64;
        Self { capacity, per_second: capacity / 60.0, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Takes a token if one is available at `now`; otherwise returns how
    /// long until one will be.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut state = self.state.lock().expect("rate limiter poisoned");
        let (tokens, last) = &mut *state;
        let elapsed = now.saturating_duration_since(*last).as_secs_f64();
        *tokens = (*tokens + elapsed * self.per_second).min(self.capacity);
        *last = now.max(*last);
        if *tokens >= 1.0 {
            *tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - *tokens) / self.per_second))
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            thread::sleep(wait);
        }
    }
}

/// Exponential retry schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    pub initial_ms: u64,
    pub factor: f64,
    pub max_retries: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self { initial_ms: 500, factor: 2.0, max_retries: 3 }
    }
}

impl Backoff {
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis((self.initial_ms as f64 * self.factor.powi(retry as i32)) as u64)
    }

    /// Runs `op`, retrying retryable failures on this schedule.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, IngestError>) -> Result<T, IngestError> {
        let mut retry = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && retry < self.max_retries => {
                    log::warn!("retrying after error: {e}");
                    thread::sleep(self.delay(retry));
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}

/// Configuration of [`HttpJsonConnector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConnectorConfig {
    pub base_url: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_max_pages")]
    pub max_pages: usize,
    #[serde(default)]
    pub backoff: Backoff,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
}

fn default_rpm() -> u32 {
    60
}
fn default_max_pages() -> usize {
    10
}
fn default_timeout() -> u64 {
    30
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ListingPage {
    Bare(Vec<serde_json::Value>),
    Paged { posts: Vec<serde_json::Value>, #[serde(default)] next: Option<String> },
}

/// Generic JSON API connector.
///
/// `GET base_url` must return either an array of posts or
/// `{"posts": [...], "next": "<cursor>"}`; a cursor is followed with
/// `?after=<cursor>` up to `max_pages` pages.
pub struct HttpJsonConnector {
    config: HttpConnectorConfig,
    client: reqwest::blocking::Client,
    limiter: TokenBucket,
}

impl HttpJsonConnector {
    pub fn new(config: HttpConnectorConfig) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .user_agent(concat!("eventspike/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| IngestError::Config(e.to_string()))?;
        let limiter = TokenBucket::per_minute(config.requests_per_minute);
        Ok(Self { config, client, limiter })
    }

    fn get_page(&self, cursor: Option<&str>) -> Result<ListingPage, IngestError> {
        self.limiter.acquire();
        let mut req = self.client.get(&self.config.base_url);
        if let Some(c) = cursor {
            req = req.query(&[("after", c)]);
        }
        if let Some(var) = &self.config.auth_token_env {
            let token = std::env::var(var).map_err(|_| IngestError::Config(format!("environment variable {var} is not set")))?;
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| IngestError::Source { retryable: true, message: e.to_string() })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err(IngestError::Source { retryable, message: format!("HTTP {status}") });
        }
        resp.json::<ListingPage>().map_err(|e| IngestError::Source { retryable: false, message: format!("bad listing: {e}") })
    }
}

impl SourceConnector for HttpJsonConnector {
    fn name(&self) -> &str {
        "http"
    }

    fn fetch_batch(&self) -> Result<SourceBatch, IngestError> {
        let mut batch = SourceBatch::default();
        let mut cursor: Option<String> = None;
        let mut position = 0;
        for _ in 0..self.config.max_pages.max(1) {
            let page = self.config.backoff.run(|| self.get_page(cursor.as_deref()))?;
            let (items, next) = match page {
                ListingPage::Bare(items) => (items, None),
                ListingPage::Paged { posts, next } => (posts, next),
            };
            for item in items {
                position += 1;
                match serde_json::from_value::<RawPost>(item) {
                    Ok(p) => batch.posts.push(p),
                    Err(e) => batch.skipped.push(SkippedItem { position, reason: e.to_string() }),
                }
            }
            match next {
                Some(n) if !n.is_empty() => cursor = Some(n),
                _ => break,
            }
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn post(id: &str, title: &str, score: i64, links: &[&str]) -> RawPost {
        RawPost {
            post_id: id.into(),
            community: "television".into(),
            title: title.into(),
            body: String::new(),
            score,
            url: format!("https://forum.example/{id}"),
            outbound_urls: links.iter().map(|s| s.to_string()).collect(),
            comments_raw: vec![],
            created_at: Utc.with_ymd_and_hms(2025, 4, 1, 12, 0, 0).unwrap(),
        }
    }

    struct Fixed(Vec<RawPost>);
    impl SourceConnector for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn fetch_batch(&self) -> Result<SourceBatch, IngestError> {
            Ok(SourceBatch { posts: self.0.clone(), skipped: vec![] })
        }
    }

    fn filter(terms: &[&str], min: i64, link: bool) -> FilterConfig {
        FilterConfig {
            search_terms: terms.iter().map(|s| s.to_string()).collect(),
            communities: vec![],
            min_engagement: min,
            require_outbound_link: link,
        }
    }

    #[test]
    fn engagement_threshold() {
        let c = Fixed(vec![post("a", "x", 10, &[]), post("b", "x", 60, &[]), post("c", "x", 90, &[])]);
        let l = list_posts(&c, &filter(&["x"], 50, false)).unwrap();
        assert_eq!(l.posts.iter().map(|p| p.post_id.as_str()).collect::<Vec<_>>(), vec!["b", "c"]);
    }

    #[test]
    fn outbound_link_required() {
        let c = Fixed(vec![post("a", "x", 1, &["https://a"]), post("b", "x", 1, &[]), post("c", "x", 1, &[" "])]);
        let l = list_posts(&c, &filter(&["x"], 0, true)).unwrap();
        assert_eq!(l.posts.len(), 1);
        assert_eq!(l.posts[0].post_id, "a");
    }

    #[test]
    fn community_match_and_duplicates() {
        let mut other = post("z", "nothing", 5, &[]);
        other.community = "cooking".into();
        let c = Fixed(vec![post("a", "nothing", 5, &[]), post("a", "nothing", 5, &[]), other]);
        let f = FilterConfig { communities: vec!["r/Television".into()], ..filter(&[], 0, false) };
        let l = list_posts(&c, &f).unwrap();
        assert_eq!(l.posts.len(), 1);
        assert_eq!(l.skipped.len(), 1);
    }

    #[test]
    fn empty_filter_rejected() {
        let c = Fixed(vec![]);
        assert!(matches!(list_posts(&c, &filter(&[], 0, false)), Err(IngestError::Config(_))));
        assert!(matches!(list_posts(&c, &filter(&["x"], -1, false)), Err(IngestError::Config(_))));
    }

    #[test]
    fn file_corpus_skips_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posts.jsonl");
        let good = serde_json::to_string(&post("a", "finale", 5, &[])).unwrap();
        let legacy = r#"{"post_id":"b","community":"tv","title":"t","score":1,"comments_raw":["plain comment",{"body":"scored","score":4}],"created_at":"2025-04-01T00:00:00Z"}"#;
        std::fs::write(&path, format!("{good}\nnot json\n\n{legacy}\n")).unwrap();
        let batch = FileCorpusConnector::new(&path).fetch_batch().unwrap();
        assert_eq!(batch.posts.len(), 2);
        assert_eq!(batch.posts[1].comments_raw[0], RawComment { body: "plain comment".into(), score: 0 });
        assert_eq!(batch.posts[1].comments_raw[1].score, 4);
        assert_eq!(batch.skipped, vec![SkippedItem { position: 2, reason: batch.skipped[0].reason.clone() }]);
    }

    #[test]
    fn missing_corpus_is_an_error() {
        assert!(FileCorpusConnector::new("/nonexistent/posts.jsonl").fetch_batch().is_err());
    }

    #[test]
    fn token_bucket_limits_burst() {
        let bucket = TokenBucket::per_minute(3);
        let now = Instant::now();
        for _ in 0..3 {
            bucket.try_acquire_at(now).unwrap();
        }
        let wait = bucket.try_acquire_at(now).unwrap_err();
        assert!(wait <= Duration::from_secs(20) && wait > Duration::from_secs(19));
        bucket.try_acquire_at(now + Duration::from_secs(20)).unwrap();
    }

    #[test]
    fn backoff_schedule_and_retry() {
        let b = Backoff { initial_ms: 1, factor: 2.0, max_retries: 2 };
        assert_eq!(b.delay(0), Duration::from_millis(1));
        assert_eq!(b.delay(3), Duration::from_millis(8));
        let mut calls = 0;
        let r: Result<(), _> = b.run(|| {
            calls += 1;
            Err(IngestError::Source { retryable: true, message: "down".into() })
        });
        assert!(r.is_err());
        assert_eq!(calls, 3);
        let mut calls = 0;
        let _ = b.run(|| -> Result<(), _> {
            calls += 1;
            Err(IngestError::Source { retryable: false, message: "bad".into() })
        });
        assert_eq!(calls, 1);
    }
}
