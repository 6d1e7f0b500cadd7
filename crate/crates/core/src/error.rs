use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid axis `{name}`: {reason}")]
    InvalidAxis { name: String, reason: String },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// The observed outcome has (numerically) zero probability under every
    /// node of the grid.
    #[error("degenerate evidence: p(y={outcome}|xi) = {evidence:e}")]
    DegenerateEvidence { outcome: u8, evidence: f64 },

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("invalid design window: {0}")]
    InvalidWindow(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// SNR is unbounded because the detected-count variance is zero.
    #[error("infinite SNR: {0}")]
    InfiniteSnr(String),

    #[error("zero signal: {0}")]
    ZeroSignal(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("images do not share a scan configuration: {0}")]
    MismatchedImages(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
