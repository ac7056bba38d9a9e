//! Adversarial filtering with a KL objective.
//!
//! Each round trains a linear softmax classifier on the kept samples, scores
//! every kept sample by `KL(prediction || softmax(votes))` and drops those
//! scoring above the mean, unless that would leave fewer than `k` samples.

use std::collections::HashSet;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::datamodel::Sample;

use super::CurationError;

/// Deterministic text encoder.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing of lowercased word tokens, L2-normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedding {
    pub dim: usize,
}

impl Default for HashEmbedding {
    fn default() -> Self {
        Self { dim: 128 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashEmbedding {
    fn name(&self) -> &str {
        "hash-bow-v1"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"\w+").expect("static regex"));
        let mut v = vec![0.0; self.dim];
        for m in re.find_iter(&text.to_lowercase()) {
            let h = fnv1a(m.as_str().as_bytes());
            let slot = (h % self.dim as u64) as usize;
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `KL(p || q)`; terms with `p_k = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pk, _)| **pk > 0.0)
        .map(|(pk, qk)| pk * (pk.ln() - qk.ln()))
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Target minimum size of the kept set.
    pub k: usize,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl FilterOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            epochs: 200,
            learning_rate: 0.1,
        }
    }
}

/// State after one scoring round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRound {
    pub round: usize,
    /// Kept-set size the classifier was trained on.
    pub kept: usize,
    pub tau: f64,
    /// Samples scoring strictly above `tau`.
    pub above_tau: usize,
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    /// Kept sample ids in input order.
    pub kept: Vec<String>,
    pub rounds: Vec<FilterRound>,
}

const CLASSES: usize = 3;

struct Linear {
    w: Vec<[f64; CLASSES]>,
    b: [f64; CLASSES],
}

impl Linear {
    fn init(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = (0..dim)
            .map(|_| std::array::from_fn(|_| rng.random_range(-0.01..0.01)))
            .collect();
        Self { w, b: [0.0; CLASSES] }
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b;
        for (xi, wi) in x.iter().zip(&self.w) {
            if *xi != 0.0 {
                for c in 0..CLASSES {
                    z[c] += xi * wi[c];
                }
            }
        }
        softmax(&z)
    }

    /// Full-batch gradient descent on the mean KL loss. With `a_k = ln p_k -
    /// ln q_k` and loss `L`, the gradient with respect to logit `k` is
    /// `p_k (a_k - L)`.
    fn train(&mut self, xs: &[&[f64]], targets: &[&[f64]], epochs: usize, lr: f64) {
        let n = xs.len() as f64;
        let dim = self.w.len();
        for _ in 0..epochs {
            let mut gw = vec![[0.0; CLASSES]; dim];
            let mut gb = [0.0; CLASSES];
            for (x, q) in xs.iter().zip(targets) {
                let p = self.predict(x);
                let loss = kl_divergence(&p, q);
                let mut g = [0.0; CLASSES];
                for c in 0..CLASSES {
                    let a = p[c].max(f64::MIN_POSITIVE).ln() - q[c].ln();
                    g[c] = p[c] * (a - loss);
                    gb[c] += g[c];
                }
                for (xi, gwi) in x.iter().zip(gw.iter_mut()) {
                    if *xi != 0.0 {
                        for c in 0..CLASSES {
                            gwi[c] += xi * g[c];
                        }
                    }
                }
            }
            for (wi, gwi) in self.w.iter_mut().zip(&gw) {
                for (w, g) in wi.iter_mut().zip(gwi) {
                    *w -= lr * g / n;
                }
            }
            for (b, g) in self.b.iter_mut().zip(&gb) {
                *b -= lr * g / n;
            }
        }
    }
}

/// Iterative removal of the samples the classifier fits worst. Stops when
/// removing the above-mean set would leave fewer than `k` samples, or when
/// nothing scores above the mean. Deterministic given the provider and seed.
pub fn adversarial_filter(
    samples: &[Sample],
    provider: &dyn EmbeddingProvider,
    opts: FilterOptions,
) -> Result<FilterOutcome, CurationError> {
    if samples.is_empty() {
        return Err(CurationError::InvalidParams("no samples to filter".into()));
    }
    let features: Vec<Vec<f64>> = samples.par_iter().map(|s| provider.embed(&s.text)).collect();
    let targets: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| softmax(&s.checkworthy_votes.map(f64::from)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut kept: Vec<usize> = (0..samples.len()).collect();
    let mut rounds = Vec::new();

    loop {
        let mut model = Linear::init(provider.dim(), &mut rng);
        let xs: Vec<&[f64]> = kept.iter().map(|&i| features[i].as_slice()).collect();
        let qs: Vec<&[f64]> = kept.iter().map(|&i| targets[i].as_slice()).collect();
        model.train(&xs, &qs, opts.epochs, opts.learning_rate);

        let losses: Vec<f64> = kept
            .par_iter()
            .map(|&i| kl_divergence(&model.predict(&features[i]), &targets[i]))
            .collect();
        let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // the clamp keeps rounding from pushing the mean below equal losses
        let tau = (losses.iter().sum::<f64>() / losses.len() as f64).clamp(lo, hi);
        let above: HashSet<usize> = kept
            .iter()
            .zip(&losses)
            .filter(|(_, &s)| s > tau)
            .map(|(&i, _)| i)
            .collect();
        let remove = !above.is_empty() && kept.len() - above.len() >= opts.k;
        rounds.push(FilterRound {
            round: rounds.len(),
            kept: kept.len(),
            tau,
            above_tau: above.len(),
            removed: remove,
        });
        if !remove {
            break;
        }
        kept.retain(|i| !above.contains(i));
    }

    Ok(FilterOutcome {
        kept: kept.into_iter().map(|i| samples[i].id.clone()).collect(),
        rounds,
    })
}

/// Ids present in every run, in the order of the first run.
pub fn intersect_runs(runs: &[Vec<String>]) -> Vec<String> {
    let Some((first, rest)) = runs.split_first() else {
        return Vec::new();
    };
    let sets: Vec<HashSet<&String>> = rest.iter().map(|r| r.iter().collect()).collect();
    first
        .iter()
        .filter(|id| sets.iter().all(|s| s.contains(id)))
        .cloned()
        .collect()
}
