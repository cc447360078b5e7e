use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sample times not strictly increasing at index {index}")]
    NonMonotone { index: usize },

    #[error("sample grid not uniform at index {index} (deviation {deviation:e})")]
    NonUniform { index: usize, deviation: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("kernel numerically zero")]
    KernelZero,

    #[error("no eigenvalue cluster passed filtering")]
    NoClusters,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate pairing at chain index {index} (|pairing| = {magnitude:e})")]
    DegeneratePairing { index: usize, magnitude: f64 },

    #[error("design matrix numerically rank deficient near poles {first} and {second}")]
    RankDeficient { first: String, second: String },

    #[error("range error: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, Error>;
