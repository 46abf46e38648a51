use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator and the analytical toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its documented bounds.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An index fell outside its valid range.
    #[error("index {index} out of range [0, {len})")]
    Range { index: usize, len: usize },

    /// A line of an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input was well formed but unusable (for instance an empty trace).
    #[error("invalid input: {0}")]
    Input(String),

    /// A statistic was requested from an accumulator without samples.
    #[error("no data: {0}")]
    NoData(&'static str),

    /// A protocol precondition was broken (e.g. selecting from no candidates).
    #[error("protocol error: {0}")]
    Protocol(&'static str),

    /// A series does not converge for the requested parameters.
    #[error("divergent distribution: {0}")]
    Divergence(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
