//! Independent reference implementations used to check the library.

#![allow(dead_code)]

use std::collections::HashMap;

/// Lowercased tokens of ASCII text: maximal runs of `[A-Za-z0-9_]`.
pub fn ascii_words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

/// BM25 scores of every document for `query`, recomputed from raw text.
pub fn bm25_scores(docs: &[String], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| ascii_words(d)).collect();
    let n = docs.len() as f64;
    let avgdl = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut scores = vec![0.0; docs.len()];
    for term in ascii_words(query) {
        let df = toks.iter().filter(|t| t.contains(&term)).count() as f64;
        if df == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for (i, t) in toks.iter().enumerate() {
            let tf = t.iter().filter(|w| **w == term).count() as f64;
            if tf > 0.0 {
                let dl = t.len() as f64;
                scores[i] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
        }
    }
    scores
}

/// Class codes: 0 = Non-MisLC, 1 = Unclear, 2 = MisLC.
fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn binary_f1(preds: &[u8], golds: &[u8], pos: impl Fn(u8) -> bool) -> f64 {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &g) in preds.iter().zip(golds) {
        match (pos(p), pos(g)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    f1_from(tp, fp, fn_)
}

pub fn bin_f1(preds: &[u8], golds: &[u8]) -> f64 {
    binary_f1(preds, golds, |l| l == 2)
}

pub fn ma_f1(preds: &[u8], golds: &[u8]) -> f64 {
    (binary_f1(preds, golds, |l| l == 1) + binary_f1(preds, golds, |l| l == 2)) / 2.0
}

pub fn mi_f1(preds: &[u8], golds: &[u8]) -> f64 {
    binary_f1(preds, golds, |l| l != 0)
}

pub fn macro3(preds: &[u8], golds: &[u8]) -> f64 {
    (0..3).map(|c| binary_f1(preds, golds, |l| l == c)).sum::<f64>() / 3.0
}

pub fn accuracy(preds: &[u8], golds: &[u8]) -> f64 {
    preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64 / preds.len() as f64
}

/// Nominal alpha from explicit ordered value pairs:
/// `1 - D_o / D_e` with `D_o = sum_{c != k} o_ck / n` and
/// `D_e = sum_{c != k} n_c n_k / (n (n - 1))`. `None` when undefined.
pub fn alpha(units: &[Vec<u32>]) -> Option<f64> {
    let mut o: HashMap<(u32, u32), f64> = HashMap::new();
    for u in units.iter().filter(|u| u.len() >= 2) {
        let w = 1.0 / (u.len() as f64 - 1.0);
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    *o.entry((u[i], u[j])).or_default() += w;
                }
            }
        }
    }
    let mut n_c: HashMap<u32, f64> = HashMap::new();
    for (&(c, _), v) in &o {
        *n_c.entry(c).or_default() += v;
    }
    let n: f64 = n_c.values().sum();
    if n <= 1.0 {
        return None;
    }
    let d_o = o.iter().filter(|((c, k), _)| c != k).map(|(_, v)| v).sum::<f64>() / n;
    let mut d_e = 0.0;
    for (c, nc) in &n_c {
        for (k, nk) in &n_c {
            if c != k {
                d_e += nc * nk;
            }
        }
    }
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return None;
    }
    Some(1.0 - d_o / d_e)
}

/// Expected value of the binary F1 numerator terms for uniform random
/// predictions: `E[tp] = pos / 3` etc. Returns `2 E[tp] / (2 E[tp] + E[fp] + E[fn])`,
/// the plug-in approximation to the mean F1.
pub fn expected_f1_uniform(n: usize, positives: usize, p_pos: f64) -> f64 {
    let tp = positives as f64 * p_pos;
    let fp = (n - positives) as f64 * p_pos;
    let fn_ = positives as f64 * (1.0 - p_pos);
    2.0 * tp / (2.0 * tp + fp + fn_)
}
