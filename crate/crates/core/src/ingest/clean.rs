//! Markup stripping and boilerplate removal.

use ego_tree::NodeRef;
use pulldown_cmark::{Event, Parser, Tag, TagEnd};
use scraper::{Html, Node};
use serde::{Deserialize, Serialize};

/// Blocks whose linked-text share reaches this ratio are treated as
/// navigation and dropped.
pub const MAX_LINK_DENSITY: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextFormat {
    Html,
    Markdown,
    Plain,
}

/// Strips markup, drops boilerplate, collapses whitespace to single spaces
/// and truncates to `max_chars` characters.
pub fn clean_text(raw: &str, format: TextFormat, max_chars: usize) -> String {
    let text = match format {
        TextFormat::Html => html_text(raw),
        TextFormat::Markdown => markdown_text(raw),
        TextFormat::Plain => raw.to_string(),
    };
    truncate_chars(&normalize_whitespace(&text), max_chars)
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn truncate_chars(s: &str, max_chars: usize) -> String {
    match s.char_indices().nth(max_chars) {
        Some((cut, _)) => s[..cut].trim_end().to_string(),
        None => s.to_string(),
    }
}

const SKIPPED: &[&str] = &[
    "script", "style", "noscript", "nav", "footer", "aside", "form", "iframe", "svg", "template", "button", "select",
    "head",
];

const BLOCKS: &[&str] = &[
    "h1", "h2", "h3", "h4", "h5", "h6", "p", "li", "blockquote", "pre", "td", "th", "figcaption", "dd", "dt", "div",
    "section", "article", "main", "header", "body", "html", "table", "ul", "ol",
];

#[derive(Default)]
struct Block {
    text: String,
    link_chars: usize,
}

/// Text of every block that passes the link-density test, in document order.
///
/// Text is split into chunks at block boundaries; inline markup is flattened
/// into the surrounding chunk.
fn html_text(raw: &str) -> String {
    let doc = Html::parse_document(raw);
    let mut blocks: Vec<Block> = vec![Block::default()];
    walk(doc.tree.root(), false, &mut blocks);
    blocks
        .into_iter()
        .filter_map(|b| {
            let text = normalize_whitespace(&b.text);
            let chars = text.chars().count();
            if chars == 0 {
                return None;
            }
            ((b.link_chars as f64) / (chars as f64) < MAX_LINK_DENSITY).then_some(text)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Appends text to the last chunk; a block element opens a fresh chunk and
/// another one after it closes, so surrounding text keeps its order.
fn walk(node: NodeRef<'_, Node>, in_link: bool, blocks: &mut Vec<Block>) {
    match node.value() {
        Node::Element(el) => {
            let name = el.name();
            if SKIPPED.contains(&name) {
                return;
            }
            let is_block = BLOCKS.contains(&name);
            if is_block {
                blocks.push(Block::default());
            }
            let in_link = in_link || name == "a";
            for child in node.children() {
                walk(child, in_link, blocks);
            }
            if is_block {
                blocks.push(Block::default());
            } else if name == "br" {
                blocks.last_mut().expect("at least one chunk").text.push(' ');
            }
        }
        Node::Text(t) => {
            let text: &str = t;
            let b = blocks.last_mut().expect("at least one chunk");
            b.text.push_str(text);
            if in_link {
                b.link_chars += normalize_whitespace(text).chars().count();
            }
        }
        _ => {
            for child in node.children() {
                walk(child, in_link, blocks);
            }
        }
    }
}

fn markdown_text(raw: &str) -> String {
    let mut out = String::new();
    let mut image_depth = 0usize;
    for event in Parser::new(raw) {
        match event {
            Event::Start(Tag::Image { .. }) => image_depth += 1,
            Event::End(TagEnd::Image) => image_depth = image_depth.saturating_sub(1),
            Event::Text(t) | Event::Code(t) if image_depth == 0 => out.push_str(&t),
            Event::Html(h) | Event::InlineHtml(h) => {
                out.push(' ');
                out.push_str(&html_text(&h));
                out.push(' ');
            }
            Event::SoftBreak | Event::HardBreak | Event::Rule => out.push(' '),
            Event::End(TagEnd::Emphasis | TagEnd::Strong | TagEnd::Strikethrough | TagEnd::Link) => {}
            Event::End(_) => out.push(' '),
            _ => {}
        }
    }
    out
}
