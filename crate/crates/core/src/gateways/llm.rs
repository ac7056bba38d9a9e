//! Language-model gateway.
//!
//! The live client speaks the chat-completion JSON protocol with per-token
//! log-probabilities. The scripted client replays canned token streams and is
//! a pure function of the request.

use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::net::{with_retries, Attempt, NetConfig, RateLimiter};
use super::GatewayError;

pub const DEFAULT_TEMPERATURE: f64 = 0.3;
pub const DEFAULT_MAX_TOKENS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    /// Text the model has already produced; generation resumes after it.
    #[serde(default)]
    pub continuation: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub want_logprobs: bool,
    #[serde(default)]
    pub stop: Option<Vec<String>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            continuation: String::new(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            want_logprobs: false,
            stop: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be a finite value >= 0",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

impl TokenLogprob {
    pub fn new(token: impl Into<String>, prob: f64) -> Self {
        Self {
            token: token.into(),
            logprob: prob_to_logprob(prob),
        }
    }

    pub fn prob(&self) -> f64 {
        self.logprob.exp()
    }
}

fn prob_to_logprob(prob: f64) -> f64 {
    prob.clamp(1e-12, 1.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub tokens: Vec<TokenLogprob>,
    pub finish_reason: FinishReason,
}

impl GenerationResponse {
    pub fn min_prob(&self) -> Option<f64> {
        self.tokens.iter().map(TokenLogprob::prob).reduce(f64::min)
    }
}

/// Enforces the response invariants shared by every backend.
fn check_response(
    req: &GenerationRequest,
    mut resp: GenerationResponse,
) -> Result<GenerationResponse, GatewayError> {
    if !req.want_logprobs {
        return Ok(resp);
    }
    if resp.tokens.is_empty() && !resp.text.is_empty() {
        return Err(GatewayError::LogprobsUnavailable);
    }
    for t in &mut resp.tokens {
        if t.logprob.is_nan() || t.logprob > 1e-6 {
            return Err(GatewayError::Protocol(format!(
                "token {:?} has logprob {}",
                t.token, t.logprob
            )));
        }
        t.logprob = t.logprob.min(0.0);
    }
    let joined: String = resp.tokens.iter().map(|t| t.token.as_str()).collect();
    if joined != resp.text {
        return Err(GatewayError::Protocol(
            "token stream does not reconstruct the text".into(),
        ));
    }
    Ok(resp)
}

pub trait LanguageModel: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError>;
}

// ---------------------------------------------------------------------------
// Scripted mock

/// One scripted reply. A rule fires when every `when` string occurs in the
/// prompt. Tokens come from `tokens` (text, probability) or, failing that,
/// from `reply` split at whitespace with probability `prob`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub when: Vec<String>,
    #[serde(default)]
    pub reply: Option<String>,
    #[serde(default)]
    pub tokens: Option<Vec<(String, f64)>>,
    #[serde(default = "one")]
    pub prob: f64,
    /// When false the rule behaves like a backend without log-probabilities.
    #[serde(default = "yes")]
    pub logprobs: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl ScriptRule {
    pub fn reply(when: &[&str], reply: &str) -> Self {
        Self {
            when: when.iter().map(|s| s.to_string()).collect(),
            reply: Some(reply.to_string()),
            prob: 1.0,
            logprobs: true,
            tokens: None,
        }
    }

    pub fn tokens(when: &[&str], tokens: &[(&str, f64)]) -> Self {
        Self {
            when: when.iter().map(|s| s.to_string()).collect(),
            reply: None,
            tokens: Some(tokens.iter().map(|(t, p)| (t.to_string(), *p)).collect()),
            prob: 1.0,
            logprobs: true,
        }
    }

    fn matches(&self, prompt: &str) -> bool {
        self.when.iter().all(|w| prompt.contains(w.as_str()))
    }

    fn stream(&self) -> Vec<TokenLogprob> {
        if let Some(tokens) = &self.tokens {
            return tokens
                .iter()
                .map(|(t, p)| TokenLogprob::new(t.clone(), *p))
                .collect();
        }
        let reply = self.reply.as_deref().unwrap_or("");
        split_reply(reply)
            .into_iter()
            .map(|t| TokenLogprob::new(t, self.prob))
            .collect()
    }
}

/// Splits text into whitespace-led pieces whose concatenation is the input.
pub fn split_reply(text: &str) -> Vec<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\s*\S+|\s+$").expect("static regex"));
    re.find_iter(text).map(|m| m.as_str()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default: Option<ScriptRule>,
}

/// Deterministic LLM stand-in. The output depends only on the request.
#[derive(Debug, Default)]
pub struct ScriptedLlm {
    script: LlmScript,
    log: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedLlm {
    pub fn new(script: LlmScript) -> Self {
        Self {
            script,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    /// Always replies with `text`, one token per word.
    pub fn constant(text: &str) -> Self {
        Self::new(LlmScript {
            rules: vec![],
            default: Some(ScriptRule::reply(&[], text)),
        })
    }

    /// Requests seen so far, in arrival order.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.log.lock().expect("log poisoned").clone()
    }

    fn rule_for(&self, prompt: &str) -> Option<&ScriptRule> {
        self.script
            .rules
            .iter()
            .find(|r| r.matches(prompt))
            .or(self.script.default.as_ref())
    }
}

/// Index of the first scripted token not yet covered by `continuation`.
fn resume_offset(stream: &[TokenLogprob], continuation: &str) -> usize {
    let mut consumed = 0;
    for (i, t) in stream.iter().enumerate() {
        if consumed >= continuation.len() {
            return i;
        }
        consumed += t.token.len();
    }
    stream.len()
}

impl LanguageModel for ScriptedLlm {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        req.validate()?;
        self.log.lock().expect("log poisoned").push(req.clone());
        let rule = self
            .rule_for(&req.prompt)
            .ok_or_else(|| GatewayError::Protocol("no scripted reply matches the prompt".into()))?;
        let stream = rule.stream();
        let start = resume_offset(&stream, &req.continuation);
        let mut tokens = Vec::new();
        let mut text = String::new();
        let mut finish = FinishReason::Stop;
        for (i, tok) in stream[start..].iter().enumerate() {
            if i == req.max_tokens {
                finish = FinishReason::Length;
                break;
            }
            let candidate = format!("{text}{}", tok.token);
            if let Some(stop) = &req.stop {
                if stop.iter().any(|s| !s.is_empty() && candidate.contains(s.as_str())) {
                    break;
                }
            }
            text = candidate;
            tokens.push(tok.clone());
        }
        if !rule.logprobs {
            tokens.clear();
        }
        check_response(
            req,
            GenerationResponse {
                text,
                tokens,
                finish_reason: finish,
            },
        )
    }
}

// ---------------------------------------------------------------------------
// HTTP client

#[derive(Debug, Clone)]
pub struct HttpLlmConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub net: NetConfig,
}

pub struct HttpLlm {
    cfg: HttpLlmConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl std::fmt::Debug for HttpLlm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print the key
        f.debug_struct("HttpLlm")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .finish()
    }
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Maps a raw HTTP exchange onto the retry policy.
pub(crate) fn classify_http(
    result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
) -> Attempt<String> {
    let mut resp = match result {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string())),
    };
    let status = resp.status().as_u16();
    let body = match resp.body_mut().read_to_string() {
        Ok(b) => b,
        Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string())),
    };
    match status {
        200..=299 => Attempt::Done(body),
        429 => Attempt::Retry(GatewayError::QuotaExceeded(format!("HTTP 429: {}", snippet(&body)))),
        500..=599 => Attempt::Retry(GatewayError::Transport(format!("HTTP {status}"))),
        403 if body.contains("Exceeded") || body.contains("quota") => {
            Attempt::Fail(GatewayError::QuotaExceeded(snippet(&body)))
        }
        _ => Attempt::Fail(GatewayError::Protocol(format!(
            "HTTP {status}: {}",
            snippet(&body)
        ))),
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

impl HttpLlm {
    pub fn new(cfg: HttpLlmConfig) -> Self {
        let agent = agent(cfg.net.timeout);
        let limiter = RateLimiter::new(cfg.net.rps);
        Self {
            cfg,
            agent,
            limiter,
        }
    }

    fn body(&self, req: &GenerationRequest) -> Value {
        let mut messages = vec![json!({"role": "user", "content": req.prompt})];
        if !req.continuation.is_empty() {
            messages.push(json!({"role": "assistant", "content": req.continuation}));
        }
        let mut body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "logprobs": req.want_logprobs,
        });
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

/// Parses a chat-completion response body.
pub fn parse_chat_response(body: &str) -> Result<GenerationResponse, GatewayError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("invalid JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Protocol("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .or_else(|| choice.get("text").and_then(Value::as_str))
        .ok_or_else(|| GatewayError::Protocol("choice has no content".into()))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") | Some("eos") | Some("stop_sequence") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let mut tokens = Vec::new();
    if let Some(items) = choice.pointer("/logprobs/content").and_then(Value::as_array) {
        for item in items {
            let token = item.get("token").and_then(Value::as_str);
            let logprob = item.get("logprob").and_then(Value::as_f64);
            match (token, logprob) {
                (Some(t), Some(lp)) => tokens.push(TokenLogprob {
                    token: t.to_string(),
                    logprob: lp,
                }),
                _ => return Err(GatewayError::Protocol("malformed logprob entry".into())),
            }
        }
    }
    Ok(GenerationResponse {
        text,
        tokens,
        finish_reason,
    })
}

impl LanguageModel for HttpLlm {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        req.validate()?;
        let body = self.body(req).to_string();
        let raw = with_retries(&self.cfg.net, &self.limiter, || {
            let mut call = self
                .agent
                .post(&self.cfg.endpoint)
                .header("Content-Type", "application/json");
            if let Some(key) = &self.cfg.api_key {
                call = call.header("Authorization", &format!("Bearer {key}"));
            }
            classify_http(call.send(body.as_str()))
        })?;
        check_response(req, parse_chat_response(&raw)?)
    }
}
