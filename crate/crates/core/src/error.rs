use thiserror::Error;

/// Errors produced by the search engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("search space too large to enumerate: {size} architectures (cap {cap})")]
    EnumerationCap { size: u128, cap: u128 },

    #[error("unknown architecture {key} for task {task}")]
    UnknownKey { task: usize, key: String },

    #[error("tokens missing from embedding vocabulary: {0:?}")]
    OutOfVocabulary(Vec<String>),

    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unreachable rank correlation target {target}: achievable range [{min}, {max}]")]
    UnreachableTau { target: f64, min: f64, max: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the error originates from input data rather than from usage.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::InvalidInput(_))
    }
}
