//! Evaluation metrics.
//!
//! `bin_f1` scores MisLC against everything else. `ma_f1` averages the
//! per-class F1 of the two positive classes (Unclear, MisLC); class 0 is
//! left out. `mi_f1` is the F1 of the collapsed binary task in which both
//! Unclear and MisLC count as positive. These are the only simple
//! definitions that reproduce the reference rows for constant and uniform
//! random classifiers on the gold distribution (93 / 540 / 78):
//!
//! | predictor    | bin_f1 | ma_f1 | mi_f1 |
//! |--------------|--------|-------|-------|
//! | all MisLC    | 0.231  | 0.116 | 0.388 |
//! | all Unclear  | 0.000  | 0.099 | 0.388 |
//!
//! The textbook 3-class macro and micro F1 are available as
//! [`macro_f1_3class`] and [`micro_f1_3class`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Label, Prediction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("LengthMismatch: {preds} predictions vs {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no predictions to score")]
    Empty,
}

/// Counts indexed `[gold][predicted]` by [`Label::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[u64; 3]; 3]);

impl Confusion {
    pub fn from_labels(preds: &[Label], golds: &[Label]) -> Result<Self, MetricsError> {
        check(preds, golds)?;
        let mut m = [[0u64; 3]; 3];
        for (p, g) in preds.iter().zip(golds) {
            m[g.index()][p.index()] += 1;
        }
        Ok(Confusion(m))
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn class_f1(&self, class: Label) -> f64 {
        let c = class.index();
        let tp = self.0[c][c];
        let fp: u64 = (0..3).filter(|&g| g != c).map(|g| self.0[g][c]).sum();
        let fn_: u64 = (0..3).filter(|&p| p != c).map(|p| self.0[c][p]).sum();
        f1(tp, fp, fn_)
    }

    /// F1 where a label is positive iff `positive(label)`, applied to both
    /// gold and prediction.
    pub fn grouped_f1(&self, positive: impl Fn(Label) -> bool) -> f64 {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for g in Label::ALL {
            for p in Label::ALL {
                let n = self.0[g.index()][p.index()];
                match (positive(g), positive(p)) {
                    (true, true) => tp += n,
                    (false, true) => fp += n,
                    (true, false) => fn_ += n,
                    (false, false) => {}
                }
            }
        }
        f1(tp, fp, fn_)
    }

    /// Predicted counts per class.
    pub fn predicted(&self) -> [u64; 3] {
        let mut out = [0; 3];
        for row in &self.0 {
            for (p, n) in row.iter().enumerate() {
                out[p] += n;
            }
        }
        out
    }

    pub fn bin_f1(&self) -> f64 {
        self.class_f1(Label::MisLC)
    }

    pub fn ma_f1(&self) -> f64 {
        (self.class_f1(Label::Unclear) + self.class_f1(Label::MisLC)) / 2.0
    }

    pub fn mi_f1(&self) -> f64 {
        self.grouped_f1(|l| l != Label::NonMisLC)
    }
}

/// `2tp / (2tp + fp + fn)`, or 0 when the denominator is 0.
pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

fn check(preds: &[Label], golds: &[Label]) -> Result<(), MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn bin_f1(preds: &[Label], golds: &[Label]) -> Result<f64, MetricsError> {
    Ok(Confusion::from_labels(preds, golds)?.bin_f1())
}

pub fn ma_f1(preds: &[Label], golds: &[Label]) -> Result<f64, MetricsError> {
    Ok(Confusion::from_labels(preds, golds)?.ma_f1())
}

pub fn mi_f1(preds: &[Label], golds: &[Label]) -> Result<f64, MetricsError> {
    Ok(Confusion::from_labels(preds, golds)?.mi_f1())
}

/// Unweighted mean of the three per-class F1 scores.
pub fn macro_f1_3class(preds: &[Label], golds: &[Label]) -> Result<f64, MetricsError> {
    let c = Confusion::from_labels(preds, golds)?;
    Ok(Label::ALL.iter().map(|&l| c.class_f1(l)).sum::<f64>() / 3.0)
}

/// Micro-averaged 3-class F1, which equals accuracy for single-label data.
pub fn micro_f1_3class(preds: &[Label], golds: &[Label]) -> Result<f64, MetricsError> {
    let c = Confusion::from_labels(preds, golds)?;
    let correct: u64 = (0..3).map(|i| c.0[i][i]).sum();
    Ok(correct as f64 / c.total() as f64)
}

pub fn error_rate(preds: &[Prediction]) -> Result<f64, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(preds.iter().filter(|p| p.is_error).count() as f64 / preds.len() as f64)
}

/// The label a prediction is scored as; errored rows count as Non-MisLC.
pub fn scored_label(p: &Prediction) -> Label {
    if p.is_error {
        Label::NonMisLC
    } else {
        p.verdict
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub bin_f1: f64,
    pub ma_f1: f64,
    pub mi_f1: f64,
    pub error_rate: f64,
    pub macro_f1_3class: f64,
    pub micro_f1_3class: f64,
    /// `[gold][predicted]`, classes ordered by label code.
    pub confusion: [[u64; 3]; 3],
    /// Predicted counts per class, ordered by label code.
    pub label_distribution: [u64; 3],
}

impl EvalReport {
    pub fn from_labels(preds: &[Label], golds: &[Label], error_rate: f64) -> Result<Self, MetricsError> {
        let c = Confusion::from_labels(preds, golds)?;
        Ok(EvalReport {
            n: preds.len(),
            bin_f1: c.bin_f1(),
            ma_f1: c.ma_f1(),
            mi_f1: c.mi_f1(),
            error_rate,
            macro_f1_3class: macro_f1_3class(preds, golds)?,
            micro_f1_3class: micro_f1_3class(preds, golds)?,
            confusion: c.0,
            label_distribution: c.predicted(),
        })
    }
}

/// Scores predictions against gold labels given in the same order.
pub fn evaluate(preds: &[Prediction], golds: &[Label]) -> Result<EvalReport, MetricsError> {
    let labels: Vec<Label> = preds.iter().map(scored_label).collect();
    EvalReport::from_labels(&labels, golds, error_rate(preds)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 divisor); 0 for fewer than 2 values.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub runs: usize,
    pub bin_f1: MeanStd,
    pub ma_f1: MeanStd,
    pub mi_f1: MeanStd,
}

/// Uniform random predictions over the three classes, repeated `runs`
/// times from one seeded stream.
pub fn random_classifier_report(golds: &[Label], runs: usize, seed: u64) -> Result<BaselineReport, MetricsError> {
    if golds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut b, mut ma, mut mi) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..runs {
        let preds: Vec<Label> = golds
            .iter()
            .map(|_| Label::ALL[rng.random_range(0..3)])
            .collect();
        let c = Confusion::from_labels(&preds, golds)?;
        b.push(c.bin_f1());
        ma.push(c.ma_f1());
        mi.push(c.mi_f1());
    }
    Ok(BaselineReport {
        runs,
        bin_f1: mean_std(&b),
        ma_f1: mean_std(&ma),
        mi_f1: mean_std(&mi),
    })
}

/// Builds a gold vector with the given per-class counts, in label order.
pub fn golds_from_counts(non_mislc: usize, unclear: usize, mislc: usize) -> Vec<Label> {
    let mut v = vec![Label::NonMisLC; non_mislc];
    v.extend(std::iter::repeat_n(Label::Unclear, unclear));
    v.extend(std::iter::repeat_n(Label::MisLC, mislc));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_golds() -> Vec<Label> {
        golds_from_counts(540, 78, 93)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 5e-4
    }

    #[test]
    fn all_mislc_row() {
        let g = reference_golds();
        let p = vec![Label::MisLC; g.len()];
        assert!(close(bin_f1(&p, &g).unwrap(), 0.231));
        assert!(close(ma_f1(&p, &g).unwrap(), 0.116));
        assert!(close(mi_f1(&p, &g).unwrap(), 0.388));
    }

    #[test]
    fn all_unclear_row() {
        let g = reference_golds();
        let p = vec![Label::Unclear; g.len()];
        assert_eq!(bin_f1(&p, &g).unwrap(), 0.0);
        assert!(close(ma_f1(&p, &g).unwrap(), 0.099));
        assert!(close(mi_f1(&p, &g).unwrap(), 0.388));
    }

    #[test]
    fn all_non_mislc_scores_zero_mi() {
        let g = reference_golds();
        let p = vec![Label::NonMisLC; g.len()];
        assert_eq!(mi_f1(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let g = reference_golds();
        assert_eq!(bin_f1(&g, &g).unwrap(), 1.0);
        assert_eq!(ma_f1(&g, &g).unwrap(), 1.0);
        assert_eq!(mi_f1(&g, &g).unwrap(), 1.0);
        assert_eq!(micro_f1_3class(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            bin_f1(&[Label::MisLC], &[]),
            Err(MetricsError::LengthMismatch { preds: 1, golds: 0 })
        );
    }

    #[test]
    fn error_rate_counts() {
        let mut preds: Vec<Prediction> = (0..4)
            .map(|i| Prediction {
                sample_id: i.to_string(),
                verdict: Label::MisLC,
                is_error: false,
                raw_text: String::new(),
                retrieval_trace: vec![],
            })
            .collect();
        assert_eq!(error_rate(&preds).unwrap(), 0.0);
        preds[0] = Prediction::error("0", "");
        assert_eq!(error_rate(&preds).unwrap(), 0.25);
        let golds = vec![Label::MisLC; 4];
        let r = evaluate(&preds, &golds).unwrap();
        assert_eq!(r.label_distribution, [1, 0, 3]);
    }

    #[test]
    fn sample_std() {
        let ms = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ms.mean, 2.5);
        assert!((ms.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn random_baseline_is_deterministic() {
        let g = vec![Label::MisLC; 20];
        assert_eq!(
            random_classifier_report(&g, 10, 3).unwrap(),
            random_classifier_report(&g, 10, 3).unwrap()
        );
    }
}
