use thiserror::Error;

#[derive(Debug, Error)]
pub enum MkgError {
    #[error("invalid part identifier: {0:?}")]
    InvalidIdentifier(String),

    #[error("unknown part: {0}")]
    UnknownPart(String),

    #[error("adding connectedTo edge {parent} -> {child} would create a cycle")]
    Cycle { parent: String, child: String },

    #[error("self-loop on part {0} is not allowed")]
    SelfLoop(String),

    #[error("invalid BOM: {0}")]
    InvalidBom(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("undefined direction: {0}")]
    UndefinedDirection(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MkgError>;

pub(crate) fn config_err(msg: impl Into<String>) -> MkgError {
    MkgError::Config(msg.into())
}
