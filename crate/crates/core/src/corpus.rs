//! Legal-corpus ingestion: paragraph splitting, tokenization and
//! overlapping token-budgeted chunks.
//!
//! Paragraphs are packed greedily up to the token budget. The next chunk
//! starts `max(1, floor(span / 2))` paragraphs after the previous start, so
//! neighbouring chunks share roughly half of their paragraphs.

use std::fs;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BUDGET: usize = 2048;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("EmptyCorpus: no .txt documents found in {0}")]
    EmptyCorpus(String),
    #[error("OversizeParagraph: {doc_id} paragraph {paragraph} has {tokens} tokens (budget {budget})")]
    OversizeParagraph {
        doc_id: String,
        paragraph: usize,
        tokens: usize,
        budget: usize,
    },
    #[error("invalid chunk budget {0}")]
    InvalidBudget(usize),
    #[error("unknown tokenizer {0:?}")]
    UnknownTokenizer(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Splits text into tokens. Implementations must be deterministic.
pub trait Tokenizer: Send + Sync {
    /// Stable identifier persisted alongside indexes.
    fn id(&self) -> &str;

    /// Byte ranges of the tokens of `text`, in order.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }

    fn tokens<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text).into_iter().map(|r| &text[r]).collect()
    }
}

/// Default tokenizer: a token is a maximal run of Unicode word characters
/// (`\w+`). Whitespace and punctuation only separate tokens, so
/// `"one,two"` has two tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+").expect("static regex"))
}

impl Tokenizer for WordTokenizer {
    fn id(&self) -> &str {
        "word-v1"
    }

    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        word_re().find_iter(text).map(|m| m.range()).collect()
    }
}

/// Resolves the `tokenizer` config key.
pub fn tokenizer_by_name(name: &str) -> Result<Box<dyn Tokenizer>, CorpusError> {
    match name {
        "word" | "word-v1" | "default" => Ok(Box::new(WordTokenizer)),
        other => Err(CorpusError::UnknownTokenizer(other.to_string())),
    }
}

pub fn count_tokens(text: &str) -> usize {
    WordTokenizer.count(text)
}

fn blank_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // a newline followed by one or more whitespace-only lines
    RE.get_or_init(|| Regex::new(r"\n(?:[^\S\n]*\n)+").expect("static regex"))
}

/// Splits on blank lines and drops empty paragraphs. `\r\n` is treated as `\n`.
pub fn split_paragraphs(raw: &str) -> Vec<String> {
    let normalized;
    let text = if raw.contains('\r') {
        normalized = raw.replace("\r\n", "\n");
        normalized.as_str()
    } else {
        raw
    };
    blank_line_re()
        .split(text)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub paragraphs: Vec<String>,
}

impl Document {
    pub fn from_text(doc_id: impl Into<String>, raw: &str) -> Self {
        Self {
            doc_id: doc_id.into(),
            paragraphs: split_paragraphs(raw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    /// Half-open `[start, end)` range of paragraph indices.
    pub paragraph_span: [usize; 2],
    pub token_count: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy)]
pub struct ChunkOptions {
    pub budget: usize,
    /// Split paragraphs longer than the budget instead of failing.
    pub hard_split: bool,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            hard_split: true,
        }
    }
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal}")
}

/// Replaces each oversize paragraph by budget-sized pieces cut at token
/// boundaries. Returns the paragraphs the chunk spans refer to.
fn fit_paragraphs(
    doc: &Document,
    tokenizer: &dyn Tokenizer,
    opts: ChunkOptions,
) -> Result<Vec<(String, usize)>, CorpusError> {
    let mut out = Vec::with_capacity(doc.paragraphs.len());
    for (i, p) in doc.paragraphs.iter().enumerate() {
        let spans = tokenizer.spans(p);
        if spans.len() <= opts.budget {
            out.push((p.clone(), spans.len()));
            continue;
        }
        if !opts.hard_split {
            return Err(CorpusError::OversizeParagraph {
                doc_id: doc.doc_id.clone(),
                paragraph: i,
                tokens: spans.len(),
                budget: opts.budget,
            });
        }
        let starts: Vec<usize> = spans.iter().step_by(opts.budget).map(|r| r.start).collect();
        for (j, &start) in starts.iter().enumerate() {
            let end = starts.get(j + 1).copied().unwrap_or(p.len());
            let n = (spans.len() - j * opts.budget).min(opts.budget);
            out.push((p[start..end].trim().to_string(), n));
        }
    }
    Ok(out)
}

/// Chunks one document. Paragraph spans refer to the document's paragraphs
/// after any hard split of oversize paragraphs.
pub fn chunk_document(
    doc: &Document,
    tokenizer: &dyn Tokenizer,
    opts: ChunkOptions,
) -> Result<Vec<Chunk>, CorpusError> {
    if opts.budget == 0 {
        return Err(CorpusError::InvalidBudget(0));
    }
    let paragraphs = fit_paragraphs(doc, tokenizer, opts)?;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < paragraphs.len() {
        let mut end = start;
        let mut total = 0;
        while end < paragraphs.len() && (end == start || total + paragraphs[end].1 <= opts.budget) {
            total += paragraphs[end].1;
            end += 1;
        }
        let text = paragraphs[start..end]
            .iter()
            .map(|(p, _)| p.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        chunks.push(Chunk {
            chunk_id: chunk_id(&doc.doc_id, chunks.len()),
            doc_id: doc.doc_id.clone(),
            paragraph_span: [start, end],
            token_count: total,
            text,
        });
        if end == paragraphs.len() {
            break;
        }
        start += ((end - start) / 2).max(1);
    }
    Ok(chunks)
}

/// Reads every `.txt` file of `dir` (sorted by file name) as a document.
pub fn load_corpus(dir: &Path) -> Result<Vec<Document>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    if paths.is_empty() {
        return Err(CorpusError::EmptyCorpus(dir.display().to_string()));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let raw = fs::read_to_string(&p).map_err(|source| CorpusError::Io {
                path: p.display().to_string(),
                source,
            })?;
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Document::from_text(stem, &raw))
        })
        .collect()
}

/// Chunks all documents in parallel; output is ordered by (doc_id, ordinal).
pub fn chunk_corpus(
    docs: &[Document],
    tokenizer: &dyn Tokenizer,
    opts: ChunkOptions,
) -> Result<Vec<Chunk>, CorpusError> {
    let mut per_doc: Vec<(String, Vec<Chunk>)> = docs
        .par_iter()
        .map(|d| chunk_document(d, tokenizer, opts).map(|c| (d.doc_id.clone(), c)))
        .collect::<Result<_, _>>()?;
    per_doc.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(per_doc.into_iter().flat_map(|(_, c)| c).collect())
}
