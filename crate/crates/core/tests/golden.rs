use chrono::{TimeZone, Utc};

use eventspike::ingest::{clean_text, TextFormat};
use eventspike::inference::extraction_prompt;
use eventspike::model::{ContentRecord, LinkedText, SourceKind};

#[test]
fn news_page_cleans_to_golden_text() {
    let html = include_str!("golden/news_article.html");
    let got = clean_text(html, TextFormat::Html, 10_000);
    assert_eq!(got, include_str!("golden/news_article.txt").trim_end());
}

#[test]
fn extraction_prompt_matches_golden() {
    let record = ContentRecord {
        record_id: "rec-7f3a".into(),
        source: SourceKind::ForumThread,
        url: "https://forum.example/r/television/comments/7f3a".into(),
        created_at: Utc.with_ymd_and_hms(2025, 5, 12, 9, 30, 0).unwrap(),
        fetched_at: Utc.with_ymd_and_hms(2025, 5, 13, 0, 0, 0).unwrap(),
        title: "The Long Night season 4 drops June 20".into(),
        body_text: "All eight episodes at once, 21:00 CET.".into(),
        comments: vec!["Finally!".into(), "Clearing my evening".into()],
        engagement: 812,
        linked_texts: vec![LinkedText {
            url: "https://news.example/long-night-s4".into(),
            text: include_str!("golden/news_article.txt").trim_end().into(),
        }],
    };
    let got = extraction_prompt(&record);
    assert_eq!(got, include_str!("golden/extract_prompt.txt"));
}
