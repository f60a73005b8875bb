use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A score failed the positivity/finiteness contract.
    #[error("invalid score at index {index}: {value} (scores must be positive and finite)")]
    InvalidScore { index: usize, value: f64 },

    /// No candidate on the grid produced a set of the requested size.
    #[error("no grid level yields a set of size at most {target_size}")]
    Infeasible {
        target_size: usize,
        /// `(alpha, set_size)` for every grid candidate.
        profile: Vec<(f64, usize)>,
    },

    /// An experiment precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Malformed input file contents.
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Checks that `alpha` lies strictly inside (0, 1).
pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}
