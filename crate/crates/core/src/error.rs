use thiserror::Error;

/// Errors raised by the representation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("x = {x} lies outside the domain")]
    Domain { x: f64 },

    #[error("non-finite sample at index {index}")]
    Data { index: usize },

    #[error("matrix is rank deficient: numerical rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("column is numerically dependent on the current basis (relative residual {relative:e})")]
    Dependent { relative: f64 },

    #[error("complex roots: discriminant {discriminant:e} at x = {x}")]
    ComplexRoots { x: f64, discriminant: f64 },

    #[error("degenerate quadratic at x = {x}: both a(x) and b(x) vanish")]
    Degenerate { x: f64 },

    #[error("pole of the rational form at x = {x} (denominator {denominator:e})")]
    Pole { x: f64, denominator: f64 },

    #[error("singular system (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("dependent columns: {0:?}")]
    DependentColumns(Vec<String>),

    #[error("dependent constraints: {0:?}")]
    DependentConstraints(Vec<String>),

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
