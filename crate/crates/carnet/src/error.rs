use crate::tensor::Shape;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {what}: {left:?} vs {right:?}")]
    ShapeMismatch {
        what: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint does not match architecture: missing {missing:?}, unexpected {unexpected:?}")]
    CheckpointMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("numeric failure in '{layer}': {what}")]
    Numeric { layer: String, what: &'static str },
    #[error("batch norm running statistics are uninitialized (eval mode needs them)")]
    BnStatsUninitialized,
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data/contract, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::InvalidParam(_) => 1,
            Error::Numeric { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
