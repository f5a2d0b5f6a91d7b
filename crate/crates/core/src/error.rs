use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("Kraus set is not trace preserving (max deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown gate kind `{0}`")]
    UnknownGate(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("least-squares system is rank deficient (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
