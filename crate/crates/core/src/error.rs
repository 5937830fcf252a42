use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported manifold: {0}")]
    UnsupportedManifold(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),

    #[error("function is not in the RKHS: nonzero coefficient {coeff} at index {index} where g(lambda) = 0")]
    NotInRkhs { index: usize, coeff: f64 },

    #[error("p = {p} splits an eigen-level (nearest boundaries: {below} and {above})")]
    SplitLevel { p: usize, below: usize, above: usize },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("numerical failure: {message} (condition estimate {condition:e})")]
    Numerical { message: String, condition: f64 },

    #[error("truncation infeasible: {0}")]
    TruncationInfeasible(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
