use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The tree height `floor(delta * log_d n)` is below one.
    #[error("degenerate tree height {hbar} for n={n}, delta={delta}")]
    DegenerateHeight { n: u64, delta: f64, hbar: u32 },

    #[error("empty sample")]
    EmptySample,

    #[error("nonpositive or censored sample at index {0}")]
    NonPositiveSample(usize),

    #[error("trace horizon {have} shorter than required {need}")]
    InsufficientHorizon { have: f64, need: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
