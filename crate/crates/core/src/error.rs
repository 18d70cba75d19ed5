use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("improper posterior: {0}")]
    Propriety(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("importance block {block} is degenerate: every weight is zero")]
    DegenerateBlock { block: usize },

    #[error("mixture proposal density is zero at {} pooled draw(s), first offenders {:?}", .draws.len(), &.draws[..draws.len().min(8)])]
    Positivity { draws: Vec<usize> },

    #[error("prior family `{0}` cannot be fractionated")]
    UnsupportedFamily(String),

    #[error("component {0} has no draws")]
    EmptyComponent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
