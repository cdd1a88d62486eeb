use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action vector: expected length {expected}, got {got}")]
    InvalidAction { expected: usize, got: usize },

    #[error("action vector contains a non-finite entry at index {0}")]
    NonFiniteAction(usize),

    #[error("graph contains a cycle")]
    Cyclic,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient data: {rows} rows, need at least {needed}")]
    InsufficientData { rows: usize, needed: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("operation not valid for this agent: {0}")]
    WrongAgent(&'static str),

    #[error("random walk did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("no acyclic slot available for noise edge injection after {0} attempts")]
    InfeasibleInjection(usize),

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("batch ordering violated: line {prev_line} has (t={prev_t}, l={prev_l}), line {line} has (t={t}, l={l})")]
    Ordering {
        prev_line: usize,
        prev_t: usize,
        prev_l: usize,
        line: usize,
        t: usize,
        l: usize,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into().display().to_string(),
            source,
        }
    }

    /// `true` for errors caused by bad input or configuration rather than by a
    /// failure while running. The CLI maps these to exit status 1.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NonConvergence(_) | Error::InfeasibleInjection(_))
    }
}
