use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the tape, the tensor kernels and gradient checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("function is not deterministic: two evaluations gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),

    #[error("token id {id} outside vocabulary of size {size}")]
    TokenOutOfVocabulary { id: usize, size: usize },
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("group size K={0} is too small; at least 2 hypotheses are required")]
    GroupTooSmall(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reward component `{0}` is unavailable: {1}")]
    ComponentUnavailable(String, String),
    #[error("reward weights must sum to 1 (got {0})")]
    WeightSum(f64),

    #[error("step aborted: non-finite {what} for hypothesis {index} (log-ratio {log_ratio})")]
    StepAbort {
        what: &'static str,
        index: usize,
        log_ratio: f64,
    },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("sample too small: {0}")]
    SampleSize(String),
    #[error("missing baseline for task `{0}`")]
    MissingBaseline(String),

    #[error("infeasible corpus split: {0}")]
    InfeasibleSplit(String),
    #[error("{path}: no valid lines ({report})")]
    EmptyCorpus { path: PathBuf, report: String },

    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
