//! C ABI over the `mislc` core: BM25 index handles, verdict parsing,
//! labeling, metrics and agreement.
//!
//! Every fallible function returns a [`MislcStatus`]; on failure the
//! message is available from [`mislc_last_error`] on the same thread.
//! Strings crossing the boundary are NUL-terminated UTF-8. Pointers
//! returned by accessor functions stay valid until the owning handle is
//! freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mislc::corpus::{chunk_corpus, load_corpus, tokenizer_by_name, ChunkOptions};
use mislc::curation::{assign_label, krippendorff_alpha, CurationError};
use mislc::datamodel::Label;
use mislc::detector::{parse_verdict, PromptMode};
use mislc::index::{Bm25Params, PostingsIndex};
use mislc::metrics;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MislcStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad parameters or input data (empty corpus, length mismatch, ...).
    InvalidInput = 3,
    /// Reading or writing files failed.
    Io = 4,
    /// The computation is undefined for the input (e.g. alpha with no
    /// pairable values).
    Undefined = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MislcStatus, msg: impl Into<String>) -> MislcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> MislcStatus) -> MislcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(MislcStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `p` must be NULL or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, MislcStatus> {
    if p.is_null() {
        return Err(fail(MislcStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MislcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(MislcStatus::NullArgument, concat!(stringify!($p), " is NULL"));
        })+
    };
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mislc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mislc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// index

/// Opaque BM25 index.
pub struct MislcIndex {
    inner: PostingsIndex,
}

/// Opaque ranked result list.
pub struct MislcHits {
    ids: Vec<CString>,
    ordinals: Vec<u32>,
    scores: Vec<f64>,
}

/// Chunks every `.txt` file of `corpus_dir` with the `word-v1` tokenizer
/// and builds an index with k1 = 0.9, b = 0.4. `budget` 0 selects the
/// default chunk budget. Free the result with [`mislc_index_free`].
///
/// # Safety
/// `corpus_dir` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mislc_index_build(
    corpus_dir: *const c_char,
    budget: usize,
    out: *mut *mut MislcIndex,
) -> MislcStatus {
    guard(|| {
        non_null!(out);
        let dir = try_ffi!(read_str(corpus_dir, "corpus_dir"));
        let mut opts = ChunkOptions::default();
        if budget > 0 {
            opts.budget = budget;
        }
        let built = (|| -> Result<PostingsIndex, String> {
            let tokenizer = tokenizer_by_name("word-v1").map_err(|e| e.to_string())?;
            let docs = load_corpus(Path::new(dir)).map_err(|e| e.to_string())?;
            let chunks = chunk_corpus(&docs, tokenizer.as_ref(), opts).map_err(|e| e.to_string())?;
            PostingsIndex::build(&chunks, Bm25Params::default(), tokenizer).map_err(|e| e.to_string())
        })();
        match built {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MislcIndex { inner }));
                MislcStatus::Ok
            }
            Err(e) => fail(MislcStatus::InvalidInput, e),
        }
    })
}

/// Loads an index directory written by [`mislc_index_save`] or the CLI.
///
/// # Safety
/// `dir` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mislc_index_load(dir: *const c_char, out: *mut *mut MislcIndex) -> MislcStatus {
    guard(|| {
        non_null!(out);
        let dir = try_ffi!(read_str(dir, "dir"));
        match PostingsIndex::load(Path::new(dir)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MislcIndex { inner }));
                MislcStatus::Ok
            }
            Err(e) => fail(MislcStatus::Io, e.to_string()),
        }
    })
}

/// # Safety
/// `index` must come from this library; `dir` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn mislc_index_save(index: *const MislcIndex, dir: *const c_char) -> MislcStatus {
    guard(|| {
        non_null!(index);
        let dir = try_ffi!(read_str(dir, "dir"));
        match (*index).inner.save(Path::new(dir)) {
            Ok(()) => MislcStatus::Ok,
            Err(e) => fail(MislcStatus::Io, e.to_string()),
        }
    })
}

/// Number of chunks, or 0 for NULL.
///
/// # Safety
/// `index` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn mislc_index_len(index: *const MislcIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// # Safety
/// `index` must be NULL or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mislc_index_free(index: *mut MislcIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Top `top_k` chunks for `query`. Free the result with [`mislc_hits_free`].
///
/// # Safety
/// `index` must come from this library, `query` must be a valid C string
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mislc_index_query(
    index: *const MislcIndex,
    query: *const c_char,
    top_k: usize,
    out: *mut *mut MislcHits,
) -> MislcStatus {
    guard(|| {
        non_null!(index, out);
        let q = try_ffi!(read_str(query, "query"));
        let hits = (*index).inner.query(q, top_k);
        let ids = hits
            .iter()
            .map(|h| CString::new(h.chunk_id.replace('\0', " ")).expect("NUL removed"))
            .collect();
        *out = Box::into_raw(Box::new(MislcHits {
            ids,
            ordinals: hits.iter().map(|h| h.ordinal).collect(),
            scores: hits.iter().map(|h| h.score).collect(),
        }));
        MislcStatus::Ok
    })
}

/// # Safety
/// `hits` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn mislc_hits_len(hits: *const MislcHits) -> usize {
    hits.as_ref().map_or(0, |h| h.scores.len())
}

/// BM25 score of hit `i`, or NaN when out of range.
///
/// # Safety
/// `hits` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn mislc_hits_score(hits: *const MislcHits, i: usize) -> f64 {
    hits.as_ref().and_then(|h| h.scores.get(i).copied()).unwrap_or(f64::NAN)
}

/// Index ordinal of hit `i`, or `UINT32_MAX` when out of range.
///
/// # Safety
/// `hits` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn mislc_hits_ordinal(hits: *const MislcHits, i: usize) -> u32 {
    hits.as_ref().and_then(|h| h.ordinals.get(i).copied()).unwrap_or(u32::MAX)
}

/// Chunk id of hit `i`, or NULL when out of range. Owned by `hits`.
///
/// # Safety
/// `hits` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn mislc_hits_chunk_id(hits: *const MislcHits, i: usize) -> *const c_char {
    hits.as_ref()
        .and_then(|h| h.ids.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `hits` must be NULL or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mislc_hits_free(hits: *mut MislcHits) {
    if !hits.is_null() {
        drop(Box::from_raw(hits));
    }
}

// ---------------------------------------------------------------------------
// stateless helpers

/// Label codes: 0 = Non-MisLC, 1 = Unclear, 2 = MisLC.
///
/// # Safety
/// `text` must be a valid C string; `label` and `is_error` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mislc_parse_verdict(
    text: *const c_char,
    constrained: bool,
    label: *mut u8,
    is_error: *mut bool,
) -> MislcStatus {
    guard(|| {
        non_null!(label, is_error);
        let text = try_ffi!(read_str(text, "text"));
        let mode = if constrained { PromptMode::Constrained } else { PromptMode::Unconstrained };
        let (l, e) = parse_verdict(text, mode);
        *label = l.code();
        *is_error = e;
        MislcStatus::Ok
    })
}

/// Rule-based label from evidence count, issue count and claim flag.
#[no_mangle]
pub extern "C" fn mislc_assign_label(evidence_count: usize, issue_count: usize, is_claim: bool) -> u8 {
    assign_label(evidence_count, issue_count, is_claim).code()
}

/// Number of `word-v1` tokens in `text`.
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mislc_count_tokens(text: *const c_char, out: *mut usize) -> MislcStatus {
    guard(|| {
        non_null!(out);
        let text = try_ffi!(read_str(text, "text"));
        *out = mislc::corpus::count_tokens(text);
        MislcStatus::Ok
    })
}

/// Detection scores, each in [0, 1].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MislcScores {
    pub bin_f1: f64,
    pub ma_f1: f64,
    pub mi_f1: f64,
}

/// # Safety
/// `preds` and `golds` must point to `n` label codes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mislc_scores(
    preds: *const u8,
    golds: *const u8,
    n: usize,
    out: *mut MislcScores,
) -> MislcStatus {
    guard(|| {
        non_null!(preds, golds, out);
        let decode = |codes: &[u8]| -> Result<Vec<Label>, MislcStatus> {
            codes
                .iter()
                .map(|&c| Label::from_code(c).ok_or_else(|| fail(MislcStatus::InvalidInput, format!("bad label code {c}"))))
                .collect()
        };
        let p = try_ffi!(decode(std::slice::from_raw_parts(preds, n)));
        let g = try_ffi!(decode(std::slice::from_raw_parts(golds, n)));
        let c = match metrics::Confusion::from_labels(&p, &g) {
            Ok(c) => c,
            Err(e) => return fail(MislcStatus::InvalidInput, e.to_string()),
        };
        *out = MislcScores {
            bin_f1: c.bin_f1(),
            ma_f1: c.ma_f1(),
            mi_f1: c.mi_f1(),
        };
        MislcStatus::Ok
    })
}

/// Nominal Krippendorff's alpha over a row-major `units` x `coders` matrix
/// of category codes; cells equal to `missing` are absent values.
///
/// # Safety
/// `values` must point to `units * coders` integers; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mislc_krippendorff_alpha(
    values: *const u32,
    units: usize,
    coders: usize,
    missing: u32,
    out: *mut f64,
) -> MislcStatus {
    guard(|| {
        non_null!(values, out);
        let Some(len) = units.checked_mul(coders) else {
            return fail(MislcStatus::InvalidInput, "matrix size overflows");
        };
        let cells = std::slice::from_raw_parts(values, len);
        let table: Vec<Vec<u32>> = cells
            .chunks(coders.max(1))
            .take(units)
            .map(|row| row.iter().copied().filter(|v| *v != missing).collect())
            .collect();
        match krippendorff_alpha(&table) {
            Ok(r) => {
                *out = r.alpha;
                MislcStatus::Ok
            }
            Err(e @ (CurationError::InsufficientData | CurationError::DegenerateData)) => {
                fail(MislcStatus::Undefined, e.to_string())
            }
            Err(e) => fail(MislcStatus::InvalidInput, e.to_string()),
        }
    })
}
