//! Nominal Krippendorff's alpha via the coincidence matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{AnnotationRecord, Verdict};

use super::CurationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha: f64,
    /// Category names in matrix order.
    pub categories: Vec<String>,
    /// `coincidence[c][k]`: pairable c-k value pairs, each unit weighted by
    /// `1 / (m_u - 1)`.
    pub coincidence: Vec<Vec<f64>>,
    /// Total pairable values.
    pub pairable: f64,
    pub units: usize,
}

/// Nominal alpha over units given as lists of values; missing values are
/// simply absent. Units with fewer than two values are ignored.
pub fn krippendorff_alpha<V: Ord + Clone + ToString>(units: &[Vec<V>]) -> Result<AgreementReport, CurationError> {
    let mut cats: BTreeMap<V, usize> = BTreeMap::new();
    for v in units.iter().filter(|u| u.len() >= 2).flatten() {
        cats.entry(v.clone()).or_insert(0);
    }
    for (i, slot) in cats.values_mut().enumerate() {
        *slot = i;
    }
    let q = cats.len();
    let mut o = vec![vec![0.0; q]; q];
    let mut used = 0;
    for u in units.iter().filter(|u| u.len() >= 2) {
        used += 1;
        let m = u.len() as f64;
        let mut counts = vec![0.0; q];
        for v in u {
            counts[cats[v]] += 1.0;
        }
        for c in 0..q {
            for k in 0..q {
                let pairs = if c == k { counts[c] * (counts[c] - 1.0) } else { counts[c] * counts[k] };
                o[c][k] += pairs / (m - 1.0);
            }
        }
    }
    if used == 0 {
        return Err(CurationError::InsufficientData);
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..q {
        for k in 0..q {
            if c != k {
                observed += o[c][k];
                expected += n_c[c] * n_c[k];
            }
        }
    }
    if expected == 0.0 {
        return Err(CurationError::DegenerateData);
    }
    Ok(AgreementReport {
        alpha: 1.0 - (n - 1.0) * observed / expected,
        categories: cats.keys().map(ToString::to_string).collect(),
        coincidence: o,
        pairable: n,
        units: used,
    })
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Yes => "yes",
        Verdict::No => "no",
        Verdict::Unclear => "unclear",
    }
}

/// Alpha over expert verdicts, one unit per sample.
pub fn verdict_alpha(records: &[AnnotationRecord]) -> Result<AgreementReport, CurationError> {
    if records.is_empty() {
        return Err(CurationError::NoAnnotations);
    }
    let mut units: BTreeMap<&str, Vec<&'static str>> = BTreeMap::new();
    for r in records {
        units.entry(&r.sample_id).or_default().push(verdict_name(r.verdict));
    }
    krippendorff_alpha(&units.into_values().collect::<Vec<_>>())
}
