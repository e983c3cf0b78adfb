use thiserror::Error;

/// Errors raised by the numeric kernel, the model types and the config layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa})")]
    NotHurwitz { abscissa: f64 },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("envelope check failed at t = {t}: norm {norm} exceeds bound {bound}")]
    EnvelopeViolation { t: f64, norm: f64, bound: f64 },

    #[error("DoS generation failed: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
