use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("moment of order {order} diverges for alpha = {alpha} (requires order < -alpha)")]
    Divergence { order: f64, alpha: f64 },

    #[error("optimizer did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("degenerate sample: all {n} observations are equal")]
    DegenerateSample { n: usize },

    #[error("degenerate statistic: T_alpha and T_gamma are both zero")]
    DegenerateStatistic,

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("row {row} has no split with a usable fit")]
    RowDegenerate { row: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by the data or the optimizer rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::DegenerateSample { .. }
                | Error::DegenerateStatistic
                | Error::FitFailure(_)
                | Error::RowDegenerate { .. }
                | Error::Divergence { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
