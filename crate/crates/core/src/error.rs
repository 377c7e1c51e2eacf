use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: String, column: String },

    #[error("{path}, line {line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty trial")]
    EmptyTrial,

    #[error("no trials")]
    NoTrials,

    #[error("{what} did not converge after {iterations} iterations; {advice}")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        advice: &'static str,
        last_iterate: Vec<f64>,
    },

    #[error("metric `{metric}`: {source}")]
    Metric {
        metric: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("design matrix is rank deficient: column `{column}` is collinear with [{}]", .depends_on.join(", "))]
    RankDeficient {
        column: String,
        depends_on: Vec<String>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::NoConvergence { .. } | Error::RankDeficient { .. } | Error::Numerical(_) => {
                ErrorKind::Numerical
            }
            Error::Metric { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
