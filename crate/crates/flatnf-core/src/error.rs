use thiserror::Error;

/// Errors raised by the library. Each variant maps onto a CLI exit class.
#[derive(Debug, Error)]
pub enum FlatError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("ball mismatch between operands")]
    BallMismatch,

    #[error("enumeration refused: projected {estimate} items exceeds cap {cap}")]
    EnumerationCap { estimate: f64, cap: usize },

    #[error("kappa = {kappa} is within 1e-12 of |Omega| = {omega} for {index}")]
    AmbiguousThreshold { kappa: f64, omega: f64, index: String },

    #[error("zero small divisor with nonzero cutoff at {index}")]
    ZeroDivisor { index: String },

    #[error("norm blowup: sampled Ysup {ysup:.3e} exceeds limit {limit:.3e}; dominant term {index}")]
    NormBlowup { ysup: f64, limit: f64, index: String },

    #[error("integration failure at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
}

impl FlatError {
    /// True for failures that come from numeric guards rather than bad input.
    pub fn is_numeric_guard(&self) -> bool {
        matches!(
            self,
            FlatError::EnumerationCap { .. }
                | FlatError::NormBlowup { .. }
                | FlatError::ZeroDivisor { .. }
                | FlatError::Integration { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, FlatError>;
