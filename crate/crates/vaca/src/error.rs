//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI reports them: configuration problems
//! exit with code 2, data problems with 3, numeric failures with 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad keys, bad values, inconsistent settings.
    #[error("config error: {0}")]
    Config(String),

    /// Structural problems in a causal graph (cycles, unknown nodes, bad edges).
    #[error("graph error: {0}")]
    Graph(String),

    /// Missing or malformed data: datasets, checkpoints, CSV files.
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: shape mismatches, non-finite values, degenerate columns.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Graph(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
