use std::path::PathBuf;

use crate::transport::TransportError;

/// Errors produced anywhere in the segmentation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum DpcError {
    #[error("vertex {vertex} is out of range for a domain of {count} vertices")]
    InvalidVertex { vertex: u64, count: u64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid grid dimensions {0:?}")]
    InvalidDims([usize; 3]),

    #[error("cannot split {vertices} vertices over {ranks} ranks")]
    TooManyRanks { ranks: usize, vertices: u64 },

    #[error("invalid rank {rank} for {rank_count} ranks")]
    InvalidRank { rank: usize, rank_count: usize },

    #[error("invalid scalar field: {0}")]
    InvalidField(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("protocol corruption: {0}")]
    ProtocolCorruption(String),

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Transport(#[from] TransportError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DpcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DpcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        DpcError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = DpcError> = std::result::Result<T, E>;
