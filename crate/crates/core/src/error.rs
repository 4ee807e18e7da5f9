use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite { what: String, row: usize, col: usize },

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("degenerate variance in {what} at grid index {index}")]
    DegenerateVariance { what: String, index: usize },

    #[error("degenerate spread of group means for channel {channel} at grid index {index}")]
    DegenerateSpread { channel: usize, index: usize },

    #[error("bootstrap replicate {replicate} stayed degenerate after {redraws} redraws")]
    DegenerateReplicate { replicate: usize, redraws: usize },

    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error("band kind mismatch: metric {metric} needs {expected} bands")]
    BandKindMismatch { metric: String, expected: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("requested accuracy {requested:e} not reached; best standard error {achieved:e} after {evaluations} evaluations")]
    AccuracyUnreachable {
        requested: f64,
        achieved: f64,
        evaluations: usize,
    },

    #[error("target probability {target} outside achievable range [{low:e}, {high:e}] on the search bracket")]
    CalibrationBracket { target: f64, low: f64, high: f64 },

    #[error("non-finite log posterior in {block}; state: {state}")]
    NonFiniteLogPosterior { block: String, state: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier surfaced by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "E_GRID",
            Error::ShapeMismatch { .. } => "E_SHAPE",
            Error::NonFinite { .. } => "E_NONFINITE",
            Error::InsufficientSample(_) => "E_SAMPLE_SIZE",
            Error::DegenerateVariance { .. } => "E_DEGENERATE_VARIANCE",
            Error::DegenerateSpread { .. } => "E_DEGENERATE_SPREAD",
            Error::DegenerateReplicate { .. } => "E_DEGENERATE_REPLICATE",
            Error::InvalidBand(_) => "E_BAND",
            Error::BandKindMismatch { .. } => "E_BAND_KIND",
            Error::InvalidConfig(_) => "E_CONFIG",
            Error::NotPositiveDefinite(_) => "E_NOT_PD",
            Error::AccuracyUnreachable { .. } => "E_ACCURACY",
            Error::CalibrationBracket { .. } => "E_BRACKET",
            Error::NonFiniteLogPosterior { .. } => "E_LOGPOST",
            Error::Parse { .. } => "E_PARSE",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
        }
    }
}
