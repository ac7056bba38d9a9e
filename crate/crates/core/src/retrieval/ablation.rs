use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{ContextChunk, IssueCatalog, Sample};
use crate::index::PostingsIndex;

use super::RetrievalError;

pub const ORACLE_SEPARATOR: &str = "\n\n";

/// A uniformly random chunk; a pure function of `(index, seed)`.
pub fn random_legal_retrieve(index: &PostingsIndex, seed: u64) -> Result<ContextChunk, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ordinal = rng.random_range(0..index.len()) as u32;
    let doc = index.doc(ordinal).expect("ordinal in range");
    Ok(ContextChunk {
        chunk_id: doc.chunk_id.clone(),
        text: doc.text.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleLegal {
    /// Definitions of the sample's gold issues, in catalog order.
    Definitions { issue_ids: Vec<String>, text: String },
    /// The sample has no gold issues; use ordinary retrieval instead.
    NormalRetrieval,
}

pub fn oracle_legal_context(sample: &Sample, catalog: &IssueCatalog) -> Result<OracleLegal, RetrievalError> {
    if sample.legal_issues.is_empty() {
        return Ok(OracleLegal::NormalRetrieval);
    }
    let mut ordered = Vec::with_capacity(sample.legal_issues.len());
    for id in &sample.legal_issues {
        let pos = catalog
            .position(id)
            .ok_or_else(|| RetrievalError::UnknownIssueId(id.clone()))?;
        ordered.push((pos, id));
    }
    ordered.sort();
    let text = ordered
        .iter()
        .map(|(_, id)| catalog.get(id).expect("checked above").definition_text.as_str())
        .collect::<Vec<_>>()
        .join(ORACLE_SEPARATOR);
    Ok(OracleLegal::Definitions {
        issue_ids: ordered.into_iter().map(|(_, id)| id.clone()).collect(),
        text,
    })
}
