use mirror_core::episode::EpisodeError;
use mirror_core::fit::FitError;
use mirror_core::graph::GraphError;
use mirror_core::ingest::IngestError;
use thiserror::Error;

use crate::log::LogError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown episode `{0}`")]
    UnknownEpisode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown evaluation `{0}`")]
    UnknownEvaluation(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownEpisode(_) => "unknown_episode",
            ServiceError::UnknownNode(_) => "unknown_node",
            ServiceError::UnknownEvaluation(_) => "unknown_evaluation",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Ingest(_) => "ingest_rejected",
            ServiceError::Episode(EpisodeError::UnknownProposal(_)) => "unknown_proposal",
            ServiceError::Episode(EpisodeError::AlreadyDecided(_)) => "already_decided",
            ServiceError::Episode(EpisodeError::SnapshotStale { .. }) => "snapshot_stale",
            ServiceError::Episode(_) => "episode_error",
            ServiceError::Fit(_) => "fit_error",
            ServiceError::Graph(_) => "graph_error",
            ServiceError::Log(LogError::ChecksumMismatch(_)) => "checksum_mismatch",
            ServiceError::Log(LogError::GapInLog { .. }) => "gap_in_log",
            ServiceError::Log(_) => "log_error",
            ServiceError::Io(_) => "storage_error",
        }
    }
}
