use thiserror::Error;

/// Errors raised by the geometry, solver and metric routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter {theta} outside the profile domain: {reason}")]
    ProfileDomain { theta: f64, reason: String },

    #[error("singular probability: p[{index}] = {value} (use the amplitude form)")]
    SingularProbability { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (residual {0:e})")]
    NotHermitian(f64),

    #[error("trace is {0}, expected {1}")]
    InvalidTrace(f64, f64),

    #[error("matrix has negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("integration step too large: local error {estimate:e} exceeds {tolerance:e}; reduce rk_step")]
    Accuracy { estimate: f64, tolerance: f64 },

    #[error("calibration failed: best residual {residual:e} above {threshold:e}")]
    CalibrationFailed { residual: f64, threshold: f64 },

    #[error("trajectory truncated at t = {last_valid_t}: {reason}")]
    Truncated { last_valid_t: f64, reason: String },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("{what}[{i}] is not finite"))),
        None => Ok(()),
    }
}
