use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline. I/O and format problems carry the
/// offending path; numeric failures carry the iteration or epoch where
/// they were detected so runs can be triaged from logs alone.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("{path}: corrupt header: {detail}")]
    CorruptHeader { path: PathBuf, detail: String },

    #[error("{path}: corrupt payload: {detail}")]
    CorruptPayload { path: PathBuf, detail: String },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("class {class}: requested {requested} patches but only {available} eligible centers")]
    ClassExhausted {
        class: usize,
        requested: usize,
        available: usize,
    },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("solver diverged at iteration {iteration}: non-finite values")]
    SolverDiverged { iteration: usize },

    #[error("{path}:{line}: {msg}")]
    Config {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("manifest {path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Data(String),
}

impl Error {
    /// True for failures of the numerics (divergence), as opposed to bad
    /// input data or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::SolverDiverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
