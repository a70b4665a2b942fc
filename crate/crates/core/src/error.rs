use thiserror::Error;

use crate::dataset::MotionClass;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the pipeline.
///
/// Variants are grouped by category so the command line tool can map them
/// onto distinct exit codes (see [`Error::category`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed session header: {0}")]
    MalformedHeader(String),

    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelCount { expected: usize, found: usize },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("signal too short: need more than {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },

    #[error("class {0} has no training frames")]
    MissingClass(MotionClass),

    #[error("class {class} predicted only {count} times (need at least {needed})")]
    InsufficientPredictions {
        class: MotionClass,
        count: usize,
        needed: usize,
    },

    #[error("degenerate proportional-control bounds for class {0}")]
    DegenerateBounds(MotionClass),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("representation collapse: {0}")]
    Collapse(String),

    #[error("infeasible target placement after {0} attempts")]
    InfeasibleTarget(usize),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Coarse error category, stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Training,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Toml(_) => ErrorCategory::Config,
            Error::NonFiniteLoss { .. } | Error::Collapse(_) => ErrorCategory::Training,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => ErrorCategory::Io,
            _ => ErrorCategory::Data,
        }
    }
}
