use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("design error: {0}")]
    Design(String),

    /// Rejection loop of a sampler ran past its attempt cap.
    #[error("numeric degeneracy: {0}")]
    Degenerate(String),

    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },

    #[error("rank-deficient design matrix; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("{solver} did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("step halving exhausted without ascent (possible complete separation); gradient norm {gradient_norm:.3e}")]
    Separation { gradient_norm: f64 },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("variance undefined: {0}")]
    Variance(String),

    #[error("{failed} of {total} replications failed, above the 5% abort threshold; first failure: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn fold(fold: usize, message: impl Into<String>) -> Self {
        Error::Fold {
            fold,
            message: message.into(),
        }
    }
}
