use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum SpiError {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("policy evaluation did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("{0} requires an uncertainty model")]
    MissingUncertainty(&'static str),

    #[error("return {value} exceeds G_max = {g_max}")]
    InvalidGMax { value: f64, g_max: f64 },

    #[error("baseline generation failed: {0}")]
    BaselineGeneration(String),

    #[error("degenerate instance: optimal performance {rho_star} does not exceed baseline {rho_b}")]
    DegenerateInstance { rho_b: f64, rho_star: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SpiError>;

impl SpiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SpiError::Io {
            path: path.into(),
            source,
        }
    }
}
