use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("token id {id} is outside the vocabulary (size {size})")]
    TokenOutOfVocabulary { id: u32, size: usize },

    #[error("invalid probability pair (p_actual={p_actual}, p_max={p_max})")]
    InvalidProbabilityPair { p_actual: f64, p_max: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("model file version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("remote scorer unreachable: {0}")]
    RemoteUnreachable(String),

    #[error("remote scorer returned status {status}: {message}")]
    RemoteStatus { status: u16, message: String },

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("non-empty texts required")]
    EmptyRequest,

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("degenerate vocabulary: {0}")]
    DegenerateVocabulary(String),

    #[error("backend mismatch: thresholds calibrated on {expected}, scores from {found}")]
    BackendMismatch { expected: String, found: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
