use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed something that violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The oracle produced a non-finite value.
    #[error("data fault at x={x:?}, d={d:?}: oracle returned {output:?}")]
    DataFault {
        x: Vec<f64>,
        d: Vec<f64>,
        output: Vec<f64>,
    },

    /// The sample set does not touch the initial or unsafe box, leaving a
    /// level-set condition unconstrained.
    #[error("class `{class}`: no samples inside the {region} box; use a denser grid")]
    Coverage { class: String, region: &'static str },

    /// The scenario program has no feasible point.
    #[error("class `{class}`: scenario program infeasible (worst row group: {group})")]
    Infeasible { class: String, group: String },

    #[error("missing {what} for class `{class}`")]
    MissingInput { class: String, what: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
