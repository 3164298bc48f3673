use thiserror::Error;

pub type Result<T, E = DistLqrError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistLqrError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix contains NaN or infinite entries ({0})")]
    NonFinite(&'static str),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Spectral radius of `sqrt(gamma) * A_K` is not below `1 - 1e-9`.
    #[error("closed loop is not stable: spectral radius of sqrt(gamma)*A_K is {radius:.6}")]
    NotStable { radius: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations (last step {last_step:.3e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("system is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("Kronecker operator is numerically singular (condition number {condition:.3e})")]
    SingularH { condition: f64 },

    /// The bound needs the spectral norm of the closed loop below one.
    #[error("spectral norm {norm:.6} is not below 1; bound is not applicable")]
    NormTooLarge { norm: f64 },

    #[error("noise model has nonzero mean; the bound assumes zero-mean disturbances")]
    NonZeroMean,

    #[error("density is undefined for a degenerate noise model")]
    Degenerate,

    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("state norm exceeded {threshold:e} in trajectory {trajectory} at step {step}")]
    Overflow {
        trajectory: usize,
        step: usize,
        threshold: f64,
    },

    #[error("target {target} is not above the truncation term {truncation_term:e}")]
    TargetTooSmall { target: f64, truncation_term: f64 },
}

impl DistLqrError {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        DistLqrError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
