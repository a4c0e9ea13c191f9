use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("empty result: {0}")]
    Empty(String),

    #[error("zero degree for {axis} '{id}'")]
    ZeroDegree { axis: &'static str, id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("svd did not converge after {iterations} iterations (worst residual {worst_residual:.3e}, residuals {residuals:?})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("quality control left an empty matrix ({} of {} features, {} of {} cells)", report.features_out, report.features_in, report.cells_out, report.cells_in)]
    EmptyAfterQc { report: Box<crate::qc::QcReport> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
