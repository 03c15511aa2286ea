use thiserror::Error;

/// Errors produced by the EBLR library.
#[derive(Debug, Error)]
pub enum EblrError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("calendar error: {0}")]
    Calendar(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid rule: {0}")]
    Rule(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("backtest error: {0}")]
    Backtest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model schema_version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EblrError>;
