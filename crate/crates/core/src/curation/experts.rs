use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::datamodel::{AnnotationRecord, Label};
use crate::metrics::{mean_std, EvalReport, MeanStd};

use super::CurationError;

/// Annotators need strictly more annotations than this to be scored.
pub const DEFAULT_MIN_ANNOTATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertScore {
    pub annotator_id: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertReport {
    pub experts: Vec<ExpertScore>,
    pub bin_f1: MeanStd,
    pub ma_f1: MeanStd,
    pub mi_f1: MeanStd,
}

/// Scores each qualified annotator's verdicts as predictions against the
/// consensus labels. Annotations on samples without a consensus label are
/// ignored.
pub fn expert_performance(
    records: &[AnnotationRecord],
    consensus: &HashMap<String, Label>,
    min_count: usize,
) -> Result<ExpertReport, CurationError> {
    let mut by_annotator: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_annotator.entry(&r.annotator_id).or_default().push(r);
    }
    let mut experts = Vec::new();
    for (id, recs) in by_annotator {
        if recs.len() <= min_count {
            continue;
        }
        let (preds, golds): (Vec<Label>, Vec<Label>) = recs
            .iter()
            .filter_map(|r| consensus.get(&r.sample_id).map(|g| (r.verdict.label(), *g)))
            .unzip();
        if preds.is_empty() {
            continue;
        }
        let report = EvalReport::from_labels(&preds, &golds, 0.0).expect("non-empty, equal lengths");
        experts.push(ExpertScore {
            annotator_id: id.to_string(),
            report,
        });
    }
    if experts.is_empty() {
        return Err(CurationError::NoQualifiedExperts(min_count));
    }
    let col = |f: fn(&EvalReport) -> f64| mean_std(&experts.iter().map(|e| f(&e.report)).collect::<Vec<_>>());
    Ok(ExpertReport {
        bin_f1: col(|r| r.bin_f1),
        ma_f1: col(|r| r.ma_f1),
        mi_f1: col(|r| r.mi_f1),
        experts,
    })
}
