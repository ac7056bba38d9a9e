//! Positional BM25 index over corpus chunks.
//!
//! Scoring is Okapi BM25 with the non-negative IDF
//! `ln(1 + (N - df + 0.5) / (df + 0.5))`. Query terms are summed with
//! multiplicity, so a repeated query term counts twice. Positions are kept
//! for integrity checks; they do not affect scores.
//!
//! On disk an index is a directory holding `meta.json`, `postings.bin` and
//! `docs.jsonl`. `postings.bin` is little-endian and length-prefixed:
//!
//! ```text
//! magic "MLCPOST1"
//! u32 term_count
//! repeat term_count (terms in byte order):
//!     u32 term_len, term bytes (UTF-8)
//!     u32 df
//!     repeat df (ordinals strictly increasing):
//!         u32 ordinal, u32 tf, tf x u32 position (strictly increasing)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenizer_by_name, Chunk, CorpusError, Tokenizer};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MLCPOST1";

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("EmptyCorpus: cannot build an index without chunks")]
    EmptyCorpus,
    #[error("corrupt index: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tokenizer(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn tf(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntry {
    pub chunk_id: String,
    pub length: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub chunk_id: String,
    pub ordinal: u32,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    n: usize,
    avgdl: f64,
    total_length: u64,
    k1: f64,
    b: f64,
    tokenizer: String,
}

pub struct PostingsIndex {
    vocabulary: HashMap<String, Vec<Posting>>,
    docs: Vec<DocEntry>,
    total_length: u64,
    params: Bm25Params,
    tokenizer: Box<dyn Tokenizer>,
}

impl fmt::Debug for PostingsIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PostingsIndex")
            .field("terms", &self.vocabulary.len())
            .field("n", &self.docs.len())
            .field("avgdl", &self.avgdl())
            .field("params", &self.params)
            .field("tokenizer", &self.tokenizer.id())
            .finish()
    }
}

/// Lowercased analyzer tokens.
fn analyze(tokenizer: &dyn Tokenizer, text: &str) -> Vec<String> {
    tokenizer
        .tokens(text)
        .into_iter()
        .map(str::to_lowercase)
        .collect()
}

impl PostingsIndex {
    pub fn build(
        chunks: &[Chunk],
        params: Bm25Params,
        tokenizer: Box<dyn Tokenizer>,
    ) -> Result<Self, IndexError> {
        if chunks.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let mut vocabulary: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut docs = Vec::with_capacity(chunks.len());
        let mut total_length = 0u64;
        for (ordinal, chunk) in chunks.iter().enumerate() {
            let ordinal = ordinal as u32;
            let terms = analyze(tokenizer.as_ref(), &chunk.text);
            let mut local: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
            for (pos, term) in terms.iter().enumerate() {
                local.entry(term.as_str()).or_default().push(pos as u32);
            }
            for (term, positions) in local {
                vocabulary
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { ordinal, positions });
            }
            total_length += terms.len() as u64;
            docs.push(DocEntry {
                chunk_id: chunk.chunk_id.clone(),
                length: terms.len() as u32,
                text: chunk.text.clone(),
            });
        }
        Ok(Self {
            vocabulary,
            docs,
            total_length,
            params,
            tokenizer,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.total_length as f64 / self.docs.len() as f64
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer_id(&self) -> &str {
        self.tokenizer.id()
    }

    pub fn doc(&self, ordinal: u32) -> Option<&DocEntry> {
        self.docs.get(ordinal as usize)
    }

    pub fn docs(&self) -> &[DocEntry] {
        &self.docs
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.vocabulary.get(term).map(Vec::as_slice)
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).map_or(0, <[Posting]>::len)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.vocabulary.keys().map(String::as_str)
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top `top_k` chunks by BM25 score. Ties go to the lower ordinal and
    /// chunks scoring zero are never returned.
    pub fn query(&self, q: &str, top_k: usize) -> Vec<Hit> {
        let avgdl = self.avgdl();
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![0.0f64; self.docs.len()];
        for term in analyze(self.tokenizer.as_ref(), q) {
            let Some(postings) = self.vocabulary.get(&term) else {
                continue;
            };
            let idf = self.idf(postings.len());
            for p in postings {
                let tf = p.tf() as f64;
                let dl = self.docs[p.ordinal as usize].length as f64;
                scores[p.ordinal as usize] +=
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
        }
        let mut hits: Vec<(u32, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|(_, s)| *s > 0.0)
            .map(|(i, s)| (i as u32, s))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(top_k);
        hits.into_iter()
            .map(|(ordinal, score)| Hit {
                chunk_id: self.docs[ordinal as usize].chunk_id.clone(),
                ordinal,
                score,
            })
            .collect()
    }

    /// Structural invariants: strictly increasing positions and ordinals,
    /// in-range ordinals, tf matching the positions list.
    pub fn check_integrity(&self) -> Result<(), IndexError> {
        let n = self.docs.len() as u32;
        for (term, postings) in &self.vocabulary {
            if postings.is_empty() {
                return Err(IndexError::Format(format!("term {term:?} has no postings")));
            }
            for w in postings.windows(2) {
                if w[0].ordinal >= w[1].ordinal {
                    return Err(IndexError::Format(format!("term {term:?}: unsorted postings")));
                }
            }
            for p in postings {
                if p.ordinal >= n {
                    return Err(IndexError::Format(format!("term {term:?}: ordinal out of range")));
                }
                if p.positions.is_empty() || p.positions.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(IndexError::Format(format!("term {term:?}: bad positions")));
                }
            }
        }
        let sum: u64 = self.docs.iter().map(|d| d.length as u64).sum();
        if sum != self.total_length {
            return Err(IndexError::Format("document lengths disagree with total".into()));
        }
        Ok(())
    }

    pub fn encode_postings(&self) -> Vec<u8> {
        let mut terms: Vec<&String> = self.vocabulary.keys().collect();
        terms.sort();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, terms.len() as u32);
        for term in terms {
            let postings = &self.vocabulary[term];
            put_u32(&mut out, term.len() as u32);
            out.extend_from_slice(term.as_bytes());
            put_u32(&mut out, postings.len() as u32);
            for p in postings {
                put_u32(&mut out, p.ordinal);
                put_u32(&mut out, p.positions.len() as u32);
                for &pos in &p.positions {
                    put_u32(&mut out, pos);
                }
            }
        }
        out
    }

    fn decode_postings(bytes: &[u8]) -> Result<HashMap<String, Vec<Posting>>, IndexError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(IndexError::Format("bad postings magic".into()));
        }
        let count = r.u32()? as usize;
        let mut vocabulary = HashMap::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let term = std::str::from_utf8(r.take(len)?)
                .map_err(|_| IndexError::Format("term is not UTF-8".into()))?
                .to_string();
            let df = r.u32()? as usize;
            let mut postings = Vec::with_capacity(df);
            for _ in 0..df {
                let ordinal = r.u32()?;
                let tf = r.u32()? as usize;
                let positions = (0..tf).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                postings.push(Posting { ordinal, positions });
            }
            vocabulary.insert(term, postings);
        }
        if r.at != bytes.len() {
            return Err(IndexError::Format("trailing bytes in postings".into()));
        }
        Ok(vocabulary)
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let meta = Meta {
            format_version: FORMAT_VERSION,
            n: self.docs.len(),
            avgdl: self.avgdl(),
            total_length: self.total_length,
            k1: self.params.k1,
            b: self.params.b,
            tokenizer: self.tokenizer.id().to_string(),
        };
        let meta_path = dir.join("meta.json");
        fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
            .map_err(io_err(&meta_path))?;
        let postings_path = dir.join("postings.bin");
        fs::write(&postings_path, self.encode_postings()).map_err(io_err(&postings_path))?;
        let mut docs = String::new();
        for d in &self.docs {
            docs.push_str(&serde_json::to_string(d)?);
            docs.push('\n');
        }
        let docs_path = dir.join("docs.jsonl");
        fs::write(&docs_path, docs).map_err(io_err(&docs_path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let meta_path = dir.join("meta.json");
        let meta: Meta =
            serde_json::from_str(&fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(IndexError::Format(format!(
                "unsupported format version {}",
                meta.format_version
            )));
        }
        let tokenizer = tokenizer_by_name(&meta.tokenizer)?;
        let postings_path = dir.join("postings.bin");
        let vocabulary =
            Self::decode_postings(&fs::read(&postings_path).map_err(io_err(&postings_path))?)?;
        let docs_path = dir.join("docs.jsonl");
        let docs = fs::read_to_string(&docs_path)
            .map_err(io_err(&docs_path))?
            .lines()
            .filter(|l| !l.is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<DocEntry>, _>>()?;
        if docs.len() != meta.n || docs.is_empty() {
            return Err(IndexError::Format(format!(
                "meta says {} chunks, docs.jsonl has {}",
                meta.n,
                docs.len()
            )));
        }
        let index = Self {
            vocabulary,
            docs,
            total_length: meta.total_length,
            params: Bm25Params {
                k1: meta.k1,
                b: meta.b,
            },
            tokenizer,
        };
        index.check_integrity()?;
        if (index.avgdl() - meta.avgdl).abs() > 1e-9 {
            return Err(IndexError::Format("avgdl disagrees with document lengths".into()));
        }
        Ok(index)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IndexError::Format("truncated postings".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
