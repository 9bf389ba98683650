//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TcError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("trace schema error at line {line}: {msg}")]
    TraceSchema { line: u64, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cycle amplitude {delta_t_c} C is at or below the threshold {t_th_c} C")]
    AmplitudeBelowThreshold { delta_t_c: f64, t_th_c: f64 },

    #[error("parameter domain error: {0}")]
    Domain(String),

    #[error("empty temperature trace for core {0}")]
    EmptyTrace(usize),

    #[error("no simulation progress for {waited_s} s of simulated time: {msg}")]
    NoProgress { waited_s: f64, msg: String },
}

impl TcError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TcError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TcError>;
