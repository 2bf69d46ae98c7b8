use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the model, simulator and solvers.
#[derive(Debug, Error)]
pub enum CbmError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("series or continued fraction failed to converge for a={a}, x={x}")]
    Convergence { a: f64, x: f64 },

    #[error("time {t} is not on the evaluation lattice (step {step}, horizon {horizon})")]
    GridCoverage { t: f64, step: f64, horizon: f64 },

    #[error(
        "second moment {second_moment} is inconsistent with mean {mean} (variance {variance} below clamp threshold)"
    )]
    NegativeVariance {
        mean: f64,
        second_moment: f64,
        variance: f64,
    },

    #[error("cache at {path} is invalid: {reason}")]
    CacheInvalid { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CbmError>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> CbmError {
    CbmError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

/// Checks that a parameter is finite and strictly positive.
pub(crate) fn require_positive(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_nonnegative(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {value}")))
    }
}
