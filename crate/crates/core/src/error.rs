use thiserror::Error;

/// Errors produced by generation, solving, metrics and experiment code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("constraint matrix is rank deficient (pivot ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("gains unidentifiable for rows {0:?}")]
    Unidentifiable(Vec<usize>),

    #[error("undefined for all-zero input: {0}")]
    ZeroInput(&'static str),

    #[error("instance too large for the LP oracle: {vars} variables (limit {limit})")]
    SizeGuard { vars: usize, limit: usize },

    #[error("LP oracle failed: {0}")]
    Lp(String),

    #[error("construction identity violated: relative error {0:.3e}")]
    Construction(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot resume: {0}")]
    Resume(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
