use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cell parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cell is monostable: found {found} fixed point(s), need 3 (offset beyond the static flipping point)")]
    Monostable { found: usize },

    #[error("root finding failed: {0}")]
    Convergence(String),

    #[error("degenerate projection axis: delta_vv = {delta_vv:e} V")]
    DegenerateAxis { delta_vv: f64 },

    #[error("relaxation did not reach the stable point within t_max = {t_max:e} s (distance left {distance:e} V)")]
    NotConverged {
        t_max: f64,
        distance: f64,
        trajectory: Box<crate::drift::Trajectory>,
    },

    #[error("projected coordinate is not strictly monotone along the trajectory (sample {index})")]
    NonMonotone { index: usize },

    #[error("walker left the drift table range at vv = {value:e} V (range [{lo:e}, {hi:e}])")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("{} path(s) failed, first: path {}: {}", .failures.len(), .failures[0].0, .failures[0].1)]
    Ensemble { failures: Vec<(u64, String)> },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
