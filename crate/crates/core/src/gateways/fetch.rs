//! Oracle evidence: fetch annotator-supplied pages, reduce them to text and
//! keep the first few hundred characters of each.

use std::collections::HashMap;
use std::fs;

use super::llm::{agent, classify_http};
use super::net::{with_retries, NetConfig, RateLimiter};
use super::GatewayError;

pub const DEFAULT_CHAR_LIMIT: usize = 500;
pub const SEGMENT_SEPARATOR: &str = "\n\n";

pub trait PageFetcher: Send + Sync {
    /// Raw page body (usually HTML).
    fn fetch(&self, url: &str) -> Result<String, GatewayError>;
}

/// Fetches `http(s)://` pages over the network and `file://` URLs from disk.
pub struct HttpFetcher {
    agent: ureq::Agent,
    net: NetConfig,
    limiter: RateLimiter,
}

impl HttpFetcher {
    pub fn new(net: NetConfig) -> Self {
        Self {
            agent: agent(net.timeout),
            limiter: RateLimiter::new(net.rps),
            net,
        }
    }
}

impl PageFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, GatewayError> {
        if let Some(path) = url.strip_prefix("file://") {
            return fs::read_to_string(path).map_err(|e| GatewayError::Transport(e.to_string()));
        }
        with_retries(&self.net, &self.limiter, || {
            classify_http(self.agent.get(url).call())
        })
    }
}

/// In-memory pages keyed by URL.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPages {
    pages: HashMap<String, String>,
}

impl ScriptedPages {
    pub fn new(pages: HashMap<String, String>) -> Self {
        Self { pages }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }
}

impl PageFetcher for ScriptedPages {
    fn fetch(&self, url: &str) -> Result<String, GatewayError> {
        self.pages
            .get(url)
            .cloned()
            .ok_or_else(|| GatewayError::Transport(format!("no scripted page for {url}")))
    }
}

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt", "footer", "h1",
    "h2", "h3", "h4", "h5", "h6", "header", "hr", "li", "main", "nav", "ol", "p", "pre",
    "section", "table", "td", "th", "title", "tr", "ul",
];

fn decode_entity(entity: &str) -> Option<char> {
    match entity {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" | "#39" => Some('\''),
        "nbsp" => Some(' '),
        _ => {
            let num = entity.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse().ok()?,
            };
            char::from_u32(code)
        }
    }
}

/// Strips tags, drops `<script>`/`<style>` bodies and comments, decodes the
/// common entities and collapses whitespace.
pub fn html_to_text(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let lower = html.to_ascii_lowercase();
    let mut i = 0;
    while i < html.len() {
        let rest = &html[i..];
        if rest.starts_with("<!--") {
            i += rest.find("-->").map_or(rest.len(), |e| e + 3);
            continue;
        }
        if rest.starts_with('<') {
            let Some(close) = rest.find('>') else {
                break;
            };
            let tag = &lower[i + 1..i + close];
            let name: String = tag
                .trim_start_matches('/')
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric())
                .collect();
            i += close + 1;
            if (name == "script" || name == "style") && !tag.starts_with('/') {
                let end_tag = format!("</{name}");
                i = lower[i..].find(&end_tag).map_or(html.len(), |e| i + e);
                continue;
            }
            if BLOCK_TAGS.contains(&name.as_str()) {
                out.push(' ');
            }
            continue;
        }
        if let Some(entity) = rest.strip_prefix('&') {
            if let Some(semi) = entity.find(';').filter(|&s| s <= 10) {
                if let Some(c) = decode_entity(&entity[..semi]) {
                    out.push(c);
                    i += semi + 2;
                    continue;
                }
            }
        }
        let c = rest.chars().next().expect("non-empty");
        out.push(c);
        i += c.len_utf8();
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First `char_limit` characters of each page's text, joined with a blank
/// line. Failed fetches contribute an empty segment and a warning.
pub fn fetch_oracle_evidence(fetcher: &dyn PageFetcher, urls: &[String], char_limit: usize) -> String {
    urls.iter()
        .map(|url| match fetcher.fetch(url) {
            Ok(body) => html_to_text(&body).chars().take(char_limit).collect(),
            Err(e) => {
                log::warn!("evidence fetch failed for {url}: {e}");
                String::new()
            }
        })
        .collect::<Vec<String>>()
        .join(SEGMENT_SEPARATOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_tags() {
        assert_eq!(html_to_text("<p>Hello <b>world</b></p>"), "Hello world");
        assert_eq!(html_to_text("wor<i>ld</i>"), "world");
        assert_eq!(html_to_text("<div>a</div><div>b</div>"), "a b");
    }

    #[test]
    fn drops_script_style_and_comments() {
        let html = "<html><head><style>p{color:red}</style><script>var x = '<p>';</script></head>\
                    <body><!-- hidden --><p>Visible &amp; kept&nbsp;&#x21;</p></body></html>";
        assert_eq!(html_to_text(html), "Visible & kept !");
    }

    #[test]
    fn no_urls_is_empty() {
        assert_eq!(fetch_oracle_evidence(&ScriptedPages::default(), &[], 500), "");
    }

    #[test]
    fn single_page() {
        let pages = ScriptedPages::new(HashMap::from([(
            "u".to_string(),
            "<p>Hello <b>world</b></p>".to_string(),
        )]));
        assert_eq!(fetch_oracle_evidence(&pages, &["u".into()], 500), "Hello world");
    }

    #[test]
    fn failed_fetch_is_empty_segment() {
        let pages = ScriptedPages::new(HashMap::from([("a".to_string(), "A".to_string())]));
        let out = fetch_oracle_evidence(&pages, &["missing".into(), "a".into()], 500);
        assert_eq!(out, "\n\nA");
    }

    #[test]
    fn file_urls_are_read_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("page.html");
        fs::write(&p, "<p>local</p>").unwrap();
        let f = HttpFetcher::new(NetConfig::default());
        let url = format!("file://{}", p.display());
        assert_eq!(fetch_oracle_evidence(&f, &[url], 500), "local");
    }
}
