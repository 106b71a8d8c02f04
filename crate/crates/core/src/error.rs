use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("linear solver failed: {message} (relative residual {residual:.3e})")]
    Singular { message: String, residual: f64 },

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("null space error: {0}")]
    NullSpace(String),

    #[error("density positivity violated: min value {min:.6e} at node {node}")]
    Positivity { min: f64, node: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    ConfigLine {
        path: String,
        line: usize,
        message: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("missing artifact {path}; run the `{producer}` subcommand first")]
    Dependency { path: PathBuf, producer: String },

    #[error("undefined relative error: reference norm is zero")]
    UndefinedRelativeError,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
