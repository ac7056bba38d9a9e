//! Domain types shared across the pipeline.
//!
//! Everything here is a plain value object. The only logic is invariant
//! checking ([`validate_dataset`]) and the stable integer codes of [`Label`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Gold or predicted class. The integer codes are part of every file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonMisLC = 0,
    Unclear = 1,
    MisLC = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::NonMisLC, Label::Unclear, Label::MisLC];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::NonMisLC),
            1 => Some(Label::Unclear),
            2 => Some(Label::MisLC),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::NonMisLC => "non_mislc",
            Label::Unclear => "unclear",
            Label::MisLC => "mislc",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        Label::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid label code {code}")))
    }
}

/// One entry of the legal-issue catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalIssue {
    pub id: String,
    pub name: String,
    pub test_text: String,
    #[serde(default)]
    pub defence_text: String,
    pub definition_text: String,
}

/// Ordered set of legal issues with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IssueCatalog {
    issues: Vec<LegalIssue>,
}

const DEFAULT_CATALOG: &str = include_str!("../data/legal_issues.json");

impl IssueCatalog {
    /// Builds a catalog, rejecting duplicate ids.
    pub fn new(issues: Vec<LegalIssue>) -> Result<Self, String> {
        let mut seen = HashSet::new();
        for issue in &issues {
            if !seen.insert(issue.id.as_str()) {
                return Err(format!("duplicate legal issue id {}", issue.id));
            }
        }
        Ok(Self { issues })
    }

    /// The bundled catalog of eleven issues.
    pub fn builtin() -> Self {
        let issues: Vec<LegalIssue> =
            serde_json::from_str(DEFAULT_CATALOG).expect("bundled catalog is valid JSON");
        Self::new(issues).expect("bundled catalog has unique ids")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let issues: Vec<LegalIssue> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::new(issues)
    }

    pub fn get(&self, id: &str) -> Option<&LegalIssue> {
        self.issues.iter().find(|i| i.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    /// Position of an issue in catalog order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.issues.iter().position(|i| i.id == id)
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LegalIssue> {
        self.issues.iter()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFlags {
    #[serde(default)]
    pub no_claim: bool,
    #[serde(default)]
    pub defence: bool,
}

/// Crowd checkworthiness votes: `[checkworthy, not_checkworthy, no_claim]`.
pub type CheckworthyVotes = [u32; 3];

/// One claim with its evidence, legal issues and gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub evidence_urls: Vec<String>,
    #[serde(default)]
    pub legal_issues: BTreeSet<String>,
    #[serde(default)]
    pub gold: Option<Label>,
    #[serde(default)]
    pub checkworthy_votes: CheckworthyVotes,
    #[serde(default)]
    pub flags: SampleFlags,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            evidence_urls: Vec::new(),
            legal_issues: BTreeSet::new(),
            gold: None,
            checkworthy_votes: [0; 3],
            flags: SampleFlags::default(),
        }
    }
}

/// An expert's verdict on whether a sample is misinformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unclear,
}

impl Verdict {
    pub fn label(self) -> Label {
        match self {
            Verdict::Yes => Label::MisLC,
            Verdict::No => Label::NonMisLC,
            Verdict::Unclear => Label::Unclear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub issues: BTreeSet<String>,
    #[serde(default)]
    pub no_claim: bool,
    #[serde(default)]
    pub defence: bool,
    #[serde(default)]
    pub evidence_urls: Vec<String>,
}

/// Which backend a retrieval event hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalSource {
    Legal,
    Web,
    Both,
}

/// One retrieval trigger during a generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub position: usize,
    pub query: String,
    pub source: RetrievalSource,
    pub chunk_ids: Vec<String>,
    pub web_result_count: usize,
}

/// Parsed model output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub verdict: Label,
    pub is_error: bool,
    pub raw_text: String,
    pub retrieval_trace: Vec<TraceEntry>,
}

impl Prediction {
    /// A failed generation; errors always count as Non-MisLC.
    pub fn error(sample_id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            verdict: Label::NonMisLC,
            is_error: true,
            raw_text: raw_text.into(),
            retrieval_trace: Vec::new(),
        }
    }
}

/// Where the context block of a prompt came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    #[default]
    None,
    Legal,
    Web,
    LegalWeb,
    RandomLegal,
    OracleLegal,
    OracleWeb,
    OracleLegalWeb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextChunk {
    pub chunk_id: String,
    pub text: String,
}

/// Context attached to one generation attempt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub legal_chunks: Vec<ContextChunk>,
    pub web_snippets: Vec<String>,
    pub source_mode: SourceMode,
}

impl RetrievedContext {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.legal_chunks.is_empty() && self.web_snippets.is_empty()
    }
}

/// Returns every invariant violation found in `samples`. An empty list means
/// the dataset is valid. Unknown issue ids are only reported when a catalog
/// is supplied.
pub fn validate_dataset(samples: &[Sample], catalog: Option<&IssueCatalog>) -> Vec<String> {
    let mut out = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in samples {
        let n = counts.entry(s.id.as_str()).or_default();
        *n += 1;
        if *n == 2 {
            out.push(format!("duplicate id {}", s.id));
        }
        if s.text.trim().is_empty() {
            out.push(format!("{}: empty text", s.id));
        }
        if s.gold == Some(Label::MisLC) && s.legal_issues.is_empty() {
            out.push(format!("{}: MisLC without legal issues", s.id));
        }
        if let Some(catalog) = catalog {
            for issue in &s.legal_issues {
                if !catalog.contains(issue) {
                    out.push(format!("{}: unknown legal issue {issue}", s.id));
                }
            }
        }
    }
    out
}

/// Checks that `(sample_id, annotator_id)` pairs are unique.
pub fn validate_annotations(records: &[AnnotationRecord]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in records {
        if !seen.insert((r.sample_id.as_str(), r.annotator_id.as_str())) {
            out.push(format!(
                "duplicate annotation {} by {}",
                r.sample_id, r.annotator_id
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mislc_without_issues_is_reported() {
        let mut s = Sample::new("S1", "some claim");
        s.gold = Some(Label::MisLC);
        assert_eq!(
            validate_dataset(&[s], None),
            vec!["S1: MisLC without legal issues".to_string()]
        );
    }

    #[test]
    fn empty_dataset_is_valid() {
        assert!(validate_dataset(&[], None).is_empty());
    }

    #[test]
    fn duplicate_ids_reported_once() {
        let a = Sample::new("a", "x");
        let b = Sample::new("a", "y");
        let c = Sample::new("a", "z");
        assert_eq!(validate_dataset(&[a, b, c], None), vec!["duplicate id a"]);
    }

    #[test]
    fn unknown_issue_is_warned_with_catalog() {
        let mut s = Sample::new("s", "claim");
        s.legal_issues.insert("not_an_issue".into());
        assert!(validate_dataset(std::slice::from_ref(&s), None).is_empty());
        let v = validate_dataset(&[s], Some(&IssueCatalog::builtin()));
        assert_eq!(v, vec!["s: unknown legal issue not_an_issue"]);
    }

    #[test]
    fn label_codes_are_stable() {
        assert_eq!(serde_json::to_string(&Label::NonMisLC).unwrap(), "0");
        assert_eq!(serde_json::to_string(&Label::Unclear).unwrap(), "1");
        assert_eq!(serde_json::to_string(&Label::MisLC).unwrap(), "2");
        assert!(serde_json::from_str::<Label>("3").is_err());
    }

    #[test]
    fn builtin_catalog_has_eleven_issues() {
        let c = IssueCatalog::builtin();
        assert_eq!(c.len(), 11);
        assert!(c.contains("defamation"));
    }

    #[test]
    fn sample_reads_null_gold() {
        let line = r#"{"id":"x","text":"t","evidence_urls":[],"legal_issues":[],"gold":null,"checkworthy_votes":[1,2,0],"flags":{"no_claim":false,"defence":true}}"#;
        let s: Sample = serde_json::from_str(line).unwrap();
        assert_eq!(s.gold, None);
        assert_eq!(s.checkworthy_votes, [1, 2, 0]);
        assert!(s.flags.defence);
        assert_eq!(serde_json::to_string(&s).unwrap(), line);
    }

    #[test]
    fn duplicate_annotations_reported() {
        let r = AnnotationRecord {
            sample_id: "s".into(),
            annotator_id: "a".into(),
            verdict: Verdict::Yes,
            issues: BTreeSet::new(),
            no_claim: false,
            defence: false,
            evidence_urls: vec![],
        };
        assert_eq!(validate_annotations(&[r.clone(), r]).len(), 1);
    }
}
