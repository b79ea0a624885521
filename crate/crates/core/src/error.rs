use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("operator has positive eigenvalues; {0} requires a contraction semigroup")]
    NonContraction(&'static str),

    #[error("control {0} is not in the control set")]
    ControlOutsideSet(f64),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("rank-deficient regression at step {step} (condition number {condition:.3e})")]
    RankDeficient { step: usize, condition: f64 },

    #[error("Picard sweep does not contract: dt * L_q = {0} (needs < 0.5)")]
    PicardContraction(f64),

    #[error("numeric refusal: {0}")]
    Refusal(String),

    #[error("extremum certificate failed: {0}")]
    Certificate(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
