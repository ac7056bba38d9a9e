use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::datamodel::{AnnotationRecord, Label};

/// Gold label from evidence and legal issues.
///
/// A non-claim is never MisLC. A claim is MisLC with both evidence and at
/// least one issue, Non-MisLC with evidence but no issue, and Unclear
/// without evidence.
pub fn assign_label(evidence_count: usize, issue_count: usize, is_claim: bool) -> Label {
    match (is_claim, evidence_count > 0, issue_count > 0) {
        (false, _, _) => Label::NonMisLC,
        (true, true, true) => Label::MisLC,
        (true, true, false) => Label::NonMisLC,
        (true, false, _) => Label::Unclear,
    }
}

/// Plurality verdict (ties give Unclear) and the issues chosen by a strict
/// majority of all annotators. Annotation order does not matter.
pub fn majority_vote(annotations: &[AnnotationRecord]) -> (Label, BTreeSet<String>) {
    let mut votes = [0usize; 3];
    let mut issue_votes: BTreeMap<&str, usize> = BTreeMap::new();
    for a in annotations {
        votes[a.verdict.label().index()] += 1;
        for issue in &a.issues {
            *issue_votes.entry(issue.as_str()).or_default() += 1;
        }
    }
    let best = votes.iter().copied().max().unwrap_or(0);
    let leaders: Vec<Label> = Label::ALL.into_iter().filter(|l| votes[l.index()] == best).collect();
    let label = match leaders.as_slice() {
        [only] => *only,
        _ => Label::Unclear,
    };
    let n = annotations.len();
    let issues = issue_votes
        .into_iter()
        .filter(|&(_, c)| 2 * c > n)
        .map(|(i, _)| i.to_string())
        .collect();
    (label, issues)
}

/// Aggregated annotation result for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consensus {
    pub sample_id: String,
    /// Majority verdict.
    pub label: Label,
    pub issues: BTreeSet<String>,
    /// True unless a strict majority marked the sample as containing no claim.
    pub is_claim: bool,
    /// Union of the evidence URLs, first-seen order.
    pub evidence_urls: Vec<String>,
    /// Label recomputed from the aggregated evidence, issues and claim flag.
    pub rule_label: Label,
    pub annotators: usize,
}

/// Groups annotations by sample (sorted by id) and aggregates each group.
pub fn consensus(records: &[AnnotationRecord]) -> Vec<Consensus> {
    let mut groups: BTreeMap<&str, Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.sample_id.as_str()).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(id, group)| {
            let (label, issues) = majority_vote(&group);
            let no_claim = group.iter().filter(|a| a.no_claim).count();
            let is_claim = 2 * no_claim <= group.len();
            let mut evidence_urls: Vec<String> = Vec::new();
            for url in group.iter().flat_map(|a| &a.evidence_urls) {
                if !evidence_urls.contains(url) {
                    evidence_urls.push(url.clone());
                }
            }
            Consensus {
                sample_id: id.to_string(),
                label,
                rule_label: assign_label(evidence_urls.len(), issues.len(), is_claim),
                issues,
                is_claim,
                evidence_urls,
                annotators: group.len(),
            }
        })
        .collect()
}
