use std::path::PathBuf;

use crate::config::ConfigError;
use crate::corpus::CorpusError;
use crate::curation::CurationError;
use crate::gateways::GatewayError;
use crate::index::IndexError;
use crate::metrics::MetricsError;
use crate::retrieval::RetrievalError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Module errors convert into it so the CLI can map
/// every failure onto a stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error("MissingGold: sample {0} has no gold label")]
    MissingGold(String),
    #[error("UnknownSample: prediction references unknown sample {0}")]
    UnknownSample(String),
    #[error("{path}:{line}: {source}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's inputs or configuration rather
    /// than by a failure while running. These exit with status 2.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Corpus(CorpusError::EmptyCorpus(_) | CorpusError::OversizeParagraph { .. })
                | Error::Index(IndexError::EmptyCorpus)
                | Error::Gateway(GatewayError::LogprobsUnavailable | GatewayError::InvalidRequest(_))
                | Error::Retrieval(RetrievalError::IndexRequired | RetrievalError::InvalidParams(_))
                | Error::Jsonl { .. }
                | Error::MissingGold(_)
                | Error::UnknownSample(_)
        )
    }
}
