use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("sample too small: need at least {need} observations, got {got}")]
    SampleSize { need: usize, got: usize },

    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("domain error at row {row}: {reason}")]
    Domain { row: usize, reason: String },

    #[error("no observations with positive kernel weight near the evaluation point")]
    ZeroDenominator,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Configuration problems map to exit code 2 in the CLI.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_))
    }
}
