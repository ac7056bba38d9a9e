//! Prompt assembly, per-sample classification and verdict parsing.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Tokenizer;
use crate::datamodel::{
    ContextChunk, IssueCatalog, Label, Prediction, RetrievedContext, Sample, SourceMode, TraceEntry,
};
use crate::gateways::fetch::{fetch_oracle_evidence, DEFAULT_CHAR_LIMIT};
use crate::gateways::{GatewayError, LanguageModel, PageFetcher, WebSearch};
use crate::index::PostingsIndex;
use crate::retrieval::{
    flare_generate, llm_call, oracle_legal_context, ralm_generate, random_legal_retrieve,
    FlareParams, GenSettings, LegalSource, OracleLegal, RalmParams, RetrievalError, Sources,
    WebSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Constrained,
    Unconstrained,
}

impl FromStr for PromptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constrained" => Ok(PromptMode::Constrained),
            "unconstrained" => Ok(PromptMode::Unconstrained),
            _ => Err(format!("unknown prompt mode {s:?}")),
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::Constrained => "constrained",
            PromptMode::Unconstrained => "unconstrained",
        })
    }
}

/// The classification prompt. `[doc]`, `[snippets]` and `[claim]` are
/// substituted verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub legal_preamble: String,
    pub web_preamble: String,
    pub claim_block: String,
    pub instruction: String,
    pub constraint_block: String,
    pub mode: PromptMode,
}

impl PromptTemplate {
    pub fn new(mode: PromptMode) -> Self {
        Self {
            legal_preamble: "Here is some relevant legal context on \"misinformation\": [doc]".into(),
            web_preamble: "Web search results for the claim: [snippets]".into(),
            claim_block: "Claim: [claim]".into(),
            instruction: "Classify the claim as either \"factual\" or \"misinformation.\"".into(),
            constraint_block: "Do not refuse to answer. Do not engage in explanations and politeness. \
                Only respond with the words \"misinformation\", \"factual\", or \"unsure\". \
                Do not add further context."
                .into(),
            mode,
        }
    }

    /// Retrieval blocks are separated by a blank line and precede the
    /// claim; the claim, instruction and constraints are one line each.
    pub fn render(&self, claim: &str, ctx: &RetrievedContext) -> String {
        let mut retrieval = Vec::new();
        if !ctx.legal_chunks.is_empty() {
            let doc = ctx
                .legal_chunks
                .iter()
                .map(|c| c.text.as_str())
                .collect::<Vec<_>>()
                .join("\n\n");
            retrieval.push(self.legal_preamble.replace("[doc]", &doc));
        }
        if !ctx.web_snippets.is_empty() {
            retrieval.push(self.web_preamble.replace("[snippets]", &ctx.web_snippets.join("\n")));
        }
        let mut lines = vec![self.claim_block.replace("[claim]", claim), self.instruction.clone()];
        if self.mode == PromptMode::Constrained {
            lines.push(self.constraint_block.clone());
        }
        let body = lines.join("\n");
        if retrieval.is_empty() {
            body
        } else {
            format!("{}\n\n{body}", retrieval.join("\n\n"))
        }
    }
}

pub fn assemble_prompt(sample_text: &str, ctx: &RetrievedContext, mode: PromptMode) -> String {
    PromptTemplate::new(mode).render(sample_text, ctx)
}

const KEYWORDS: [(&str, Label); 3] = [
    ("misinformation", Label::MisLC),
    ("factual", Label::NonMisLC),
    ("unsure", Label::Unclear),
];

/// Distinct labels whose keyword occurs in `text` (already lowercased).
fn keyword_labels(text: &str) -> Vec<Label> {
    KEYWORDS
        .iter()
        .filter(|(k, _)| text.contains(k))
        .map(|&(_, l)| l)
        .collect()
}

fn decide(found: &[Label]) -> (Label, bool) {
    match found {
        [] => (Label::NonMisLC, true),
        [only] => (*only, false),
        _ => (Label::Unclear, false),
    }
}

/// Substrings enclosed in straight or curly double quotes.
fn quoted_segments(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c, open) {
            ('"' | '\u{201c}' | '\u{201d}', None) => open = Some(i + c.len_utf8()),
            ('"' | '\u{201c}' | '\u{201d}', Some(start)) => {
                out.push(&text[start..i]);
                open = None;
            }
            _ => {}
        }
    }
    out
}

/// Maps generated text to a label. Matching is case-insensitive substring
/// search. Several distinct keywords give Unclear; none is an error scored
/// as Non-MisLC. In unconstrained mode quoted keywords take precedence.
pub fn parse_verdict(text: &str, mode: PromptMode) -> (Label, bool) {
    let lower = text.to_lowercase();
    if mode == PromptMode::Unconstrained {
        let quoted = quoted_segments(&lower).join(" ");
        let found = keyword_labels(&quoted);
        if !found.is_empty() {
            return decide(&found);
        }
    }
    decide(&keyword_labels(&lower))
}

/// Which retrieval pipeline produces the generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    #[default]
    None,
    RalmLegal,
    FlareLegal,
    FlareWeb,
    FlareLegalWeb,
    /// FLARE over the legal index with `theta = 1`.
    FlareTheta1,
    RandomLegal,
    OracleLegal,
    OracleWeb,
    OracleLegalWeb,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 10] = [
        RetrievalMode::None,
        RetrievalMode::RalmLegal,
        RetrievalMode::FlareLegal,
        RetrievalMode::FlareWeb,
        RetrievalMode::FlareLegalWeb,
        RetrievalMode::FlareTheta1,
        RetrievalMode::RandomLegal,
        RetrievalMode::OracleLegal,
        RetrievalMode::OracleWeb,
        RetrievalMode::OracleLegalWeb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RetrievalMode::None => "none",
            RetrievalMode::RalmLegal => "ralm_legal",
            RetrievalMode::FlareLegal => "flare_legal",
            RetrievalMode::FlareWeb => "flare_web",
            RetrievalMode::FlareLegalWeb => "flare_legal_web",
            RetrievalMode::FlareTheta1 => "flare_theta1",
            RetrievalMode::RandomLegal => "random_legal",
            RetrievalMode::OracleLegal => "oracle_legal",
            RetrievalMode::OracleWeb => "oracle_web",
            RetrievalMode::OracleLegalWeb => "oracle_legal_web",
        }
    }

    pub fn needs_index(self) -> bool {
        !matches!(self, RetrievalMode::None | RetrievalMode::FlareWeb | RetrievalMode::OracleWeb)
    }

    pub fn needs_search(self) -> bool {
        matches!(
            self,
            RetrievalMode::FlareWeb
                | RetrievalMode::FlareLegalWeb
                | RetrievalMode::OracleWeb
                | RetrievalMode::OracleLegalWeb
        )
    }

    pub fn is_flare(self) -> bool {
        !matches!(self, RetrievalMode::None | RetrievalMode::RalmLegal)
    }
}

impl FromStr for RetrievalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        RetrievalMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown retrieval mode {s:?}"))
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub retrieval: RetrievalMode,
    pub prompt_mode: PromptMode,
    pub ralm: RalmParams,
    pub flare: FlareParams,
    pub gen: GenSettings,
    /// Run seed; the random-chunk ablation derives a per-sample seed from it.
    pub seed: u64,
    pub oracle_char_limit: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalMode::None,
            prompt_mode: PromptMode::Constrained,
            ralm: RalmParams::default(),
            flare: FlareParams::default(),
            gen: GenSettings::default(),
            seed: 0,
            oracle_char_limit: DEFAULT_CHAR_LIMIT,
        }
    }
}

/// External services and data a classification may use. Only the ones the
/// configured mode needs have to be present.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub llm: &'a dyn LanguageModel,
    pub tokenizer: &'a dyn Tokenizer,
    pub catalog: &'a IssueCatalog,
    pub index: Option<&'a PostingsIndex>,
    pub search: Option<&'a dyn WebSearch>,
    pub fetcher: Option<&'a dyn PageFetcher>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub prediction: Prediction,
    /// The last prompt sent for the final answer.
    pub prompt: String,
    pub regenerations: usize,
}

impl Classification {
    pub fn prompt_sha256(&self) -> String {
        hex::encode(Sha256::digest(self.prompt.as_bytes()))
    }
}

/// Per-sample seed for the random-chunk ablation.
pub fn sample_seed(run_seed: u64, sample_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

fn index_of<'a>(b: &Backends<'a>) -> Result<&'a PostingsIndex, RetrievalError> {
    b.index.ok_or(RetrievalError::IndexRequired)
}

fn search_of<'a>(b: &Backends<'a>) -> Result<&'a dyn WebSearch, RetrievalError> {
    b.search
        .ok_or_else(|| RetrievalError::InvalidParams("this retrieval mode needs a web search backend".into()))
}

fn sources_for<'a>(sample: &Sample, cfg: &DetectorConfig, b: &Backends<'a>) -> Result<Sources<'a>, RetrievalError> {
    use RetrievalMode as M;
    let legal_index = || index_of(b).map(LegalSource::Index);
    let web_search = || search_of(b).map(WebSource::Search);
    let oracle_legal = || -> Result<LegalSource<'a>, RetrievalError> {
        match oracle_legal_context(sample, b.catalog)? {
            OracleLegal::Definitions { issue_ids, text } => Ok(LegalSource::Fixed(ContextChunk {
                chunk_id: format!("oracle:{}", issue_ids.join("+")),
                text,
            })),
            OracleLegal::NormalRetrieval => legal_index(),
        }
    };
    let oracle_web = || -> Result<WebSource<'a>, RetrievalError> {
        if sample.evidence_urls.is_empty() {
            return web_search();
        }
        let fetcher = b
            .fetcher
            .ok_or_else(|| RetrievalError::InvalidParams("oracle web mode needs a page fetcher".into()))?;
        Ok(WebSource::Fixed(fetch_oracle_evidence(
            fetcher,
            &sample.evidence_urls,
            cfg.oracle_char_limit,
        )))
    };
    let (legal, web, mode) = match cfg.retrieval {
        M::None => (None, None, SourceMode::None),
        M::RalmLegal | M::FlareLegal | M::FlareTheta1 => (Some(legal_index()?), None, SourceMode::Legal),
        M::FlareWeb => (None, Some(web_search()?), SourceMode::Web),
        M::FlareLegalWeb => (Some(legal_index()?), Some(web_search()?), SourceMode::LegalWeb),
        M::RandomLegal => {
            let chunk = random_legal_retrieve(index_of(b)?, sample_seed(cfg.seed, &sample.id))?;
            (Some(LegalSource::Fixed(chunk)), None, SourceMode::RandomLegal)
        }
        M::OracleLegal => (Some(oracle_legal()?), None, SourceMode::OracleLegal),
        M::OracleWeb => (None, Some(oracle_web()?), SourceMode::OracleWeb),
        M::OracleLegalWeb => (Some(oracle_legal()?), Some(oracle_web()?), SourceMode::OracleLegalWeb),
    };
    Ok(Sources { legal, web, mode })
}

/// Runs the configured pipeline for one sample and parses its verdict.
pub fn classify_sample(
    sample: &Sample,
    cfg: &DetectorConfig,
    b: &Backends<'_>,
) -> Result<Classification, RetrievalError> {
    let sources = sources_for(sample, cfg, b)?;
    let last_prompt = RefCell::new(String::new());
    let prompt = |ctx: &RetrievedContext| {
        let p = assemble_prompt(&sample.text, ctx, cfg.prompt_mode);
        last_prompt.replace(p.clone());
        p
    };

    let (text, trace, regenerations): (String, Vec<TraceEntry>, usize) = match cfg.retrieval {
        RetrievalMode::None => {
            let resp = llm_call(b.llm, prompt(&RetrievedContext::empty()), "", cfg.gen.max_tokens, false, &cfg.gen)?;
            (resp.text, Vec::new(), 0)
        }
        RetrievalMode::RalmLegal => {
            let (resp, trace) = ralm_generate(&sample.text, b.tokenizer, &prompt, cfg.ralm, cfg.gen, b.llm, &sources)?;
            (resp.text, trace, 0)
        }
        mode => {
            let mut params = cfg.flare;
            if mode == RetrievalMode::FlareTheta1 {
                params.theta = 1.0;
            }
            let out = flare_generate(&prompt, params, cfg.gen, b.llm, &sources)?;
            (out.response.text, out.events, out.regenerations)
        }
    };

    let (verdict, is_error) = parse_verdict(&text, cfg.prompt_mode);
    Ok(Classification {
        prediction: Prediction {
            sample_id: sample.id.clone(),
            verdict,
            is_error,
            raw_text: text,
            retrieval_trace: trace,
        },
        prompt: last_prompt.into_inner(),
        regenerations,
    })
}

/// Gateway failures that survived retries for one sample only. These become
/// error predictions; everything else aborts the batch.
pub fn is_per_sample_failure(err: &RetrievalError) -> bool {
    matches!(
        err,
        RetrievalError::Gateway(
            GatewayError::Transport(_) | GatewayError::Protocol(_) | GatewayError::QuotaExceeded(_)
        )
    )
}

/// Like [`classify_sample`], but per-sample gateway failures become error
/// predictions.
pub fn classify_or_error(
    sample: &Sample,
    cfg: &DetectorConfig,
    b: &Backends<'_>,
) -> Result<Classification, RetrievalError> {
    match classify_sample(sample, cfg, b) {
        Err(e) if is_per_sample_failure(&e) => {
            log::warn!("sample {}: {e}", sample.id);
            Ok(Classification {
                prediction: Prediction::error(&sample.id, ""),
                prompt: String::new(),
                regenerations: 0,
            })
        }
        other => other,
    }
}
