//! Clients for the external services the pipeline talks to: an LLM that
//! reports per-token log-probabilities, a web-search API, and a page fetcher
//! for oracle evidence. Each has a deterministic scripted stand-in so the
//! whole pipeline runs offline.

pub mod fetch;
pub mod llm;
pub mod net;
pub mod search;

pub use fetch::{fetch_oracle_evidence, html_to_text, HttpFetcher, PageFetcher, ScriptedPages};
pub use llm::{
    FinishReason, GenerationRequest, GenerationResponse, HttpLlm, LanguageModel, ScriptedLlm,
    TokenLogprob,
};
pub use net::{NetConfig, RateLimiter};
pub use search::{HttpSearch, ScriptedSearch, WebResult, WebSearch};

/// Results requested per web query; the pipeline only consumes the first.
pub const DEFAULT_SEARCH_RESULTS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("TransportError: {0}")]
    Transport(String),
    #[error("ProtocolError: {0}")]
    Protocol(String),
    #[error("LogprobsUnavailable: backend returned no token log-probabilities")]
    LogprobsUnavailable,
    #[error("QuotaExceeded: {0}")]
    QuotaExceeded(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}
