//! Web search. The live client targets the Custom Search JSON API
//! (`items[].title/link/snippet`); an empty result list is a normal outcome.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::llm::{agent, classify_http};
use super::net::{with_retries, NetConfig, RateLimiter};
use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebResult {
    pub rank: usize,
    pub title: String,
    pub link: String,
    #[serde(default)]
    pub snippet: String,
}

pub trait WebSearch: Send + Sync {
    fn search(&self, query: &str, num: usize) -> Result<Vec<WebResult>, GatewayError>;
}

fn check_query(query: &str) -> Result<(), GatewayError> {
    if query.trim().is_empty() {
        Err(GatewayError::InvalidRequest("empty search query".into()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedResult {
    pub title: String,
    pub link: String,
    #[serde(default)]
    pub snippet: String,
}

/// Results are returned for the first rule whose `contains` occurs in the
/// query (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRule {
    pub contains: String,
    pub results: Vec<ScriptedResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchScript {
    #[serde(default)]
    pub rules: Vec<SearchRule>,
    #[serde(default)]
    pub default: Vec<ScriptedResult>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedSearch {
    script: SearchScript,
}

impl ScriptedSearch {
    pub fn new(script: SearchScript) -> Self {
        Self { script }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }
}

impl WebSearch for ScriptedSearch {
    fn search(&self, query: &str, num: usize) -> Result<Vec<WebResult>, GatewayError> {
        check_query(query)?;
        let q = query.to_lowercase();
        let results = self
            .script
            .rules
            .iter()
            .find(|r| q.contains(&r.contains.to_lowercase()))
            .map_or(&self.script.default, |r| &r.results);
        Ok(results
            .iter()
            .take(num)
            .enumerate()
            .map(|(i, r)| WebResult {
                rank: i + 1,
                title: r.title.clone(),
                link: r.link.clone(),
                snippet: r.snippet.clone(),
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct HttpSearchConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub cx: Option<String>,
    pub net: NetConfig,
}

pub struct HttpSearch {
    cfg: HttpSearchConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl HttpSearch {
    pub fn new(cfg: HttpSearchConfig) -> Self {
        let agent = agent(cfg.net.timeout);
        let limiter = RateLimiter::new(cfg.net.rps);
        Self {
            cfg,
            agent,
            limiter,
        }
    }
}

/// Parses a Custom Search response; a missing `items` array means no results.
pub fn parse_search_response(body: &str, num: usize) -> Result<Vec<WebResult>, GatewayError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("invalid JSON: {e}")))?;
    let Some(items) = v.get("items") else {
        return Ok(Vec::new());
    };
    let items = items
        .as_array()
        .ok_or_else(|| GatewayError::Protocol("items is not an array".into()))?;
    items
        .iter()
        .take(num)
        .enumerate()
        .map(|(i, item)| {
            let field = |k: &str| item.get(k).and_then(Value::as_str).unwrap_or("").to_string();
            let link = field("link");
            if link.is_empty() {
                return Err(GatewayError::Protocol(format!("result {} has no link", i + 1)));
            }
            Ok(WebResult {
                rank: i + 1,
                title: field("title"),
                link,
                snippet: field("snippet"),
            })
        })
        .collect()
}

impl WebSearch for HttpSearch {
    fn search(&self, query: &str, num: usize) -> Result<Vec<WebResult>, GatewayError> {
        check_query(query)?;
        let num_param = num.clamp(1, 10).to_string();
        let raw = with_retries(&self.cfg.net, &self.limiter, || {
            let mut call = self
                .agent
                .get(&self.cfg.endpoint)
                .query("q", query)
                .query("num", &num_param);
            if let Some(key) = &self.cfg.api_key {
                call = call.query("key", key);
            }
            if let Some(cx) = &self.cfg.cx {
                call = call.query("cx", cx);
            }
            classify_http(call.call())
        })?;
        parse_search_response(&raw, num)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moon_script() -> ScriptedSearch {
        let r = |i: usize| ScriptedResult {
            title: format!("t{i}"),
            link: format!("https://example.org/{i}"),
            snippet: format!("snippet {i}"),
        };
        ScriptedSearch::new(SearchScript {
            rules: vec![SearchRule {
                contains: "moon landing".into(),
                results: vec![r(1), r(2), r(3)],
            }],
            default: vec![],
        })
    }

    #[test]
    fn keyed_results() {
        let hits = moon_script().search("Was the Moon Landing faked", 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(moon_script().search("moon landing", 2).unwrap().len(), 2);
    }

    #[test]
    fn unmatched_query_is_empty() {
        assert!(moon_script().search("tax rates", 10).unwrap().is_empty());
    }

    #[test]
    fn empty_query_rejected() {
        assert!(moon_script().search("  ", 10).is_err());
    }

    #[test]
    fn parses_recorded_fixture() {
        let body = r#"{"kind":"customsearch#search","items":[
            {"title":"A","link":"https://a.example","snippet":"first"},
            {"title":"B","link":"https://b.example"}]}"#;
        let hits = parse_search_response(body, 10).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[1].snippet, "");
        assert!(parse_search_response(r#"{"kind":"x"}"#, 10).unwrap().is_empty());
        assert!(parse_search_response(r#"{"items":[{"title":"no link"}]}"#, 10).is_err());
    }
}
