//! Fetching pages linked from threads.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::clean::{clean_text, TextFormat};
use super::connector::{Backoff, RawPost};
use super::IngestError;
use crate::parallel::bounded_map;

/// Upper bound on the characters kept from any single page.
pub const PAGE_CHAR_CAP: usize = 20_000;

/// Retrieves raw HTML for a URL.
pub trait PageFetcher: Sync {
    fn fetch(&self, url: &str) -> Result<String, IngestError>;
}

/// Plain HTTP GET with a timeout.
pub struct HttpPageFetcher {
    client: reqwest::blocking::Client,
    backoff: Backoff,
}

impl HttpPageFetcher {
    pub fn new(timeout: Duration, backoff: Backoff) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("eventspike/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| IngestError::Config(e.to_string()))?;
        Ok(Self { client, backoff })
    }

    fn get_once(&self, url: &str) -> Result<String, IngestError> {
        let resp = self.client.get(url).send().map_err(|e| IngestError::Source { retryable: true, message: e.to_string() })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err(IngestError::Source { retryable, message: format!("{url}: HTTP {status}") });
        }
        resp.text().map_err(|e| IngestError::Source { retryable: true, message: e.to_string() })
    }
}

impl PageFetcher for HttpPageFetcher {
    fn fetch(&self, url: &str) -> Result<String, IngestError> {
        self.backoff.run(|| self.get_once(url))
    }
}

/// Serves pages from a URL-to-HTML map; unknown URLs fail as not found.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MapPageFetcher {
    pub pages: BTreeMap<String, String>,
}

impl MapPageFetcher {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        let pages = serde_json::from_str(&text).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { pages })
    }
}

impl PageFetcher for MapPageFetcher {
    fn fetch(&self, url: &str) -> Result<String, IngestError> {
        self.pages.get(url).cloned().ok_or_else(|| IngestError::Source { retryable: false, message: format!("{url}: not found") })
    }
}

/// A linked page after cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchedPage {
    pub url: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub url: String,
    pub reason: String,
}

/// Fetches and cleans up to `max_pages` distinct outbound links of `post`
/// with at most `parallelism` requests in flight. Output keeps link order.
pub fn fetch_linked_pages(
    post: &RawPost,
    fetcher: &dyn PageFetcher,
    max_pages: usize,
    parallelism: usize,
) -> (Vec<FetchedPage>, Vec<FetchFailure>) {
    let mut urls: Vec<&str> = Vec::new();
    for u in post.outbound_urls.iter().map(|u| u.trim()).filter(|u| !u.is_empty()) {
        if !urls.contains(&u) {
            urls.push(u);
        }
    }
    urls.truncate(max_pages);
    let results = bounded_map(&urls, parallelism, |_, url| fetcher.fetch(url));
    let mut pages = Vec::new();
    let mut failures = Vec::new();
    for (url, result) in urls.into_iter().zip(results) {
        match result {
            Ok(html) => {
                let text = clean_text(&html, TextFormat::Html, PAGE_CHAR_CAP);
                if text.is_empty() {
                    failures.push(FetchFailure { url: url.to_string(), reason: "no text after cleaning".into() });
                } else {
                    pages.push(FetchedPage { url: url.to_string(), text });
                }
            }
            Err(e) => {
                log::warn!("linked page {url} skipped: {e}");
                failures.push(FetchFailure { url: url.to_string(), reason: e.to_string() });
            }
        }
    }
    (pages, failures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn post(links: &[&str]) -> RawPost {
        RawPost {
            post_id: "p".into(),
            community: "tv".into(),
            title: "t".into(),
            body: String::new(),
            score: 1,
            url: String::new(),
            outbound_urls: links.iter().map(|s| s.to_string()).collect(),
            comments_raw: vec![],
            created_at: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn failures_are_reported_not_fatal() {
        let mut f = MapPageFetcher::default();
        f.pages.insert("https://a".into(), "<p>Alpha</p>".into());
        f.pages.insert("https://c".into(), "<script>x</script>".into());
        let (pages, failures) = fetch_linked_pages(&post(&["https://a", "https://b", "https://a", "https://c"]), &f, 10, 2);
        assert_eq!(pages, vec![FetchedPage { url: "https://a".into(), text: "Alpha".into() }]);
        assert_eq!(failures.iter().map(|f| f.url.as_str()).collect::<Vec<_>>(), vec!["https://b", "https://c"]);
    }

    #[test]
    fn page_limit_applies_after_dedup() {
        let mut f = MapPageFetcher::default();
        for u in ["https://1", "https://2", "https://3"] {
            f.pages.insert(u.into(), format!("<p>{u}</p>"));
        }
        let (pages, _) = fetch_linked_pages(&post(&["https://1", "https://1", "https://2", "https://3"]), &f, 2, 4);
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[1].url, "https://2");
    }
}
