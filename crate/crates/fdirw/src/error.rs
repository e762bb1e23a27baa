use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("time step {dt:e} s exceeds the {phase} stability limit {limit:e} s")]
    Stability { phase: &'static str, dt: f64, limit: f64 },

    #[error("macro step {dt_macro:e} s is not an integer multiple of the substep {dt_fd:e} s")]
    StepRatio { dt_macro: f64, dt_fd: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix was preconditioned for geometry {expected} but got {actual}")]
    GeometryHashMismatch { expected: String, actual: String },

    #[error("matrix encodes dt = {encoded:e} s but the configuration requests dt_macro = {requested:e} s")]
    DtMismatch { encoded: f64, requested: f64 },

    #[error("malformed {format} file {path}: {reason}")]
    FileFormat { format: &'static str, path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
