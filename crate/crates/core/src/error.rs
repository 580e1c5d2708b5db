use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the modeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no conversion factor for drug `{drug}` via route `{route}`")]
    UnknownConversion { drug: String, route: String },

    #[error("degenerate labels: both classes must be present")]
    DegenerateLabels,

    #[error("non-finite feature value in column {column} (row {row})")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("non-finite target at row {0}")]
    NonFiniteTarget(usize),

    #[error("feature arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate cutoff: r must be strictly below 1")]
    DegenerateCutoff,

    #[error("nothing to regress: {0} non-zero training targets (need at least 2)")]
    NothingToRegress(usize),

    #[error("degenerate differences: paired differences have zero variance")]
    DegenerateDifferences,

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("unknown token `{token}` for {kind}")]
    UnknownToken { kind: &'static str, token: String },

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
