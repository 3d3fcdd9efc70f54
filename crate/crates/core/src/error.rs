//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    /// A data cell that failed validation; `row` is 1-based and counts data rows
    /// (the header is row 0).
    #[error("row {row}, column `{column}`: {message}")]
    BadCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature failed to reach tolerance after {panels} panels (error estimate {error:e})")]
    Quadrature { panels: usize, error: f64 },

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("{what} is singular or ill-conditioned (condition number {condition:e})")]
    Singular { what: String, condition: f64 },

    #[error("restriction jacobian has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("null hypothesis violated: {0}")]
    NullViolated(String),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
}
