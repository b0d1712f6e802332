use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("singular right-hand side: {0}")]
    Singularity(String),

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("reservoir diverged at sample {sample}")]
    ReservoirDivergence { sample: usize },

    #[error("degenerate channel {channel}: {reason}")]
    DegenerateChannel { channel: usize, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("grid mismatch between histograms")]
    GridMismatch,

    #[error("random search failed: all {tried} sampled configurations diverged or errored")]
    SearchFailure { tried: usize, configs: Vec<String> },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
