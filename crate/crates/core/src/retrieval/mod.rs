//! Adaptive retrieval controllers and the ablation retrievers.
//!
//! Both controllers are generic over how a prompt is built from the current
//! [`RetrievedContext`]; the detector supplies the template. Retrieved
//! content replaces the previous retrieval slot instead of accumulating.

mod ablation;
mod flare;
mod query;
mod ralm;

use serde::{Deserialize, Serialize};

pub use ablation::{oracle_legal_context, random_legal_retrieve, OracleLegal, ORACLE_SEPARATOR};
pub use flare::{flare_generate, FlareOutput};
pub use query::{
    low_confidence_spans, qry_llm, qry_masked, question_prompt, sentence_token_count,
    split_sentences,
};
pub use ralm::ralm_generate;

use crate::datamodel::{ContextChunk, RetrievalSource, RetrievedContext, SourceMode, TraceEntry};
use crate::gateways::{GatewayError, LanguageModel, WebSearch, DEFAULT_SEARCH_RESULTS};
use crate::index::PostingsIndex;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("UnknownIssueId: {0}")]
    UnknownIssueId(String),
    #[error("EmptyCorpus: the index has no chunks")]
    EmptyCorpus,
    #[error("this retrieval mode needs a BM25 index")]
    IndexRequired,
    #[error("invalid retrieval parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RalmParams {
    /// Tokens generated between retrievals.
    pub stride: usize,
    /// Number of trailing tokens used as the query.
    pub query_window: usize,
}

impl Default for RalmParams {
    fn default() -> Self {
        Self {
            stride: 4,
            query_window: 32,
        }
    }
}

impl RalmParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.stride == 0 || self.query_window == 0 {
            return Err(RetrievalError::InvalidParams(
                "stride and query window must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    /// The tentative sentence with low-confidence tokens removed.
    #[default]
    Masked,
    /// One LLM-written question per low-confidence span.
    LlmGenerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlareParams {
    /// A sentence is regenerated when any token probability is below this.
    pub theta: f64,
    /// Tokens below this probability are masked out of queries.
    pub beta: f64,
    pub query_strategy: QueryStrategy,
}

impl Default for FlareParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            beta: 0.4,
            query_strategy: QueryStrategy::Masked,
        }
    }
}

impl FlareParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for (name, v) in [("theta", self.theta), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RetrievalError::InvalidParams(format!(
                    "{name} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Sampling settings shared by every generation call of one controller run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSettings {
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: Option<u64>,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            temperature: crate::gateways::llm::DEFAULT_TEMPERATURE,
            max_tokens: crate::gateways::llm::DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }
}

pub enum LegalSource<'a> {
    Index(&'a PostingsIndex),
    /// Content that ignores the query (oracle definitions, a random chunk).
    Fixed(ContextChunk),
}

pub enum WebSource<'a> {
    Search(&'a dyn WebSearch),
    Fixed(String),
}

/// The retrieval backends active for one generation.
pub struct Sources<'a> {
    pub legal: Option<LegalSource<'a>>,
    pub web: Option<WebSource<'a>>,
    pub mode: SourceMode,
}

impl<'a> Sources<'a> {
    pub fn none() -> Self {
        Self {
            legal: None,
            web: None,
            mode: SourceMode::None,
        }
    }

    pub fn legal(index: &'a PostingsIndex) -> Self {
        Self {
            legal: Some(LegalSource::Index(index)),
            web: None,
            mode: SourceMode::Legal,
        }
    }

    pub fn web(search: &'a dyn WebSearch) -> Self {
        Self {
            legal: None,
            web: Some(WebSource::Search(search)),
            mode: SourceMode::Web,
        }
    }

    fn trace_source(&self) -> RetrievalSource {
        match (&self.legal, &self.web) {
            (Some(_), Some(_)) => RetrievalSource::Both,
            (None, Some(_)) => RetrievalSource::Web,
            _ => RetrievalSource::Legal,
        }
    }

    /// Context available before any query is issued: only fixed content.
    pub fn initial_context(&self) -> RetrievedContext {
        let mut ctx = RetrievedContext {
            source_mode: self.mode,
            ..RetrievedContext::default()
        };
        if let Some(LegalSource::Fixed(c)) = &self.legal {
            ctx.legal_chunks.push(c.clone());
        }
        if let Some(WebSource::Fixed(s)) = &self.web {
            if !s.is_empty() {
                ctx.web_snippets.push(s.clone());
            }
        }
        if ctx.is_empty() {
            ctx.source_mode = SourceMode::None;
        }
        ctx
    }

    /// Issues every query to every source. Legal retrieval keeps the top
    /// chunk per query; web retrieval keeps the first result's snippet per
    /// query.
    pub fn retrieve(
        &self,
        queries: &[String],
        position: usize,
    ) -> Result<(RetrievedContext, TraceEntry), RetrievalError> {
        let queries: Vec<&String> = queries.iter().filter(|q| !q.trim().is_empty()).collect();
        let mut ctx = self.initial_context();
        ctx.source_mode = self.mode;
        let mut web_result_count = 0;
        for q in &queries {
            if let Some(LegalSource::Index(index)) = &self.legal {
                if let Some(hit) = index.query(q, 1).into_iter().next() {
                    if !ctx.legal_chunks.iter().any(|c| c.chunk_id == hit.chunk_id) {
                        let text = index.doc(hit.ordinal).map(|d| d.text.clone()).unwrap_or_default();
                        ctx.legal_chunks.push(ContextChunk {
                            chunk_id: hit.chunk_id,
                            text,
                        });
                    }
                }
            }
            if let Some(WebSource::Search(search)) = &self.web {
                let results = search.search(q, DEFAULT_SEARCH_RESULTS)?;
                web_result_count += results.len();
                if let Some(first) = results.first() {
                    if !first.snippet.is_empty() {
                        ctx.web_snippets.push(first.snippet.clone());
                    }
                }
            }
        }
        if ctx.is_empty() {
            ctx.source_mode = SourceMode::None;
        }
        let entry = TraceEntry {
            position,
            query: queries.iter().map(|q| q.as_str()).collect::<Vec<_>>().join(" || "),
            source: self.trace_source(),
            chunk_ids: ctx.legal_chunks.iter().map(|c| c.chunk_id.clone()).collect(),
            web_result_count,
        };
        Ok((ctx, entry))
    }
}

/// Convenience bound for the controllers' prompt builders.
pub trait PromptBuilder: Fn(&RetrievedContext) -> String {}
impl<F: Fn(&RetrievedContext) -> String> PromptBuilder for F {}

pub(crate) fn llm_call(
    llm: &dyn LanguageModel,
    prompt: String,
    continuation: &str,
    max_tokens: usize,
    want_logprobs: bool,
    settings: &GenSettings,
) -> Result<crate::gateways::GenerationResponse, GatewayError> {
    llm.generate(&crate::gateways::GenerationRequest {
        prompt,
        continuation: continuation.to_string(),
        temperature: settings.temperature,
        max_tokens,
        want_logprobs,
        stop: None,
        seed: settings.seed,
    })
}
