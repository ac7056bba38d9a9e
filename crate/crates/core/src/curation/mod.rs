//! Dataset curation: label assignment, vote aggregation, adversarial
//! filtering, agreement and expert scoring.

mod agreement;
mod experts;
mod filter;
mod labeling;

pub use agreement::{krippendorff_alpha, verdict_alpha, AgreementReport};
pub use experts::{expert_performance, ExpertReport, DEFAULT_MIN_ANNOTATIONS};
pub use filter::{
    adversarial_filter, intersect_runs, kl_divergence, softmax, EmbeddingProvider, FilterOptions,
    FilterOutcome, FilterRound, HashEmbedding,
};
pub use labeling::{assign_label, consensus, majority_vote, Consensus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurationError {
    #[error("DegenerateData: every annotation has the same value, agreement is undefined")]
    DegenerateData,
    #[error("InsufficientData: no unit has two or more annotations")]
    InsufficientData,
    #[error("NoQualifiedExperts: no annotator has more than {0} annotations")]
    NoQualifiedExperts(usize),
    #[error("no annotations given")]
    NoAnnotations,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}
