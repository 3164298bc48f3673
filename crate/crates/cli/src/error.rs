use distlqr_core::DistLqrError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerical(#[from] DistLqrError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 1 for configuration and validation problems, 2 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(e) => match e {
                DistLqrError::DimensionMismatch { .. }
                | DistLqrError::NonFinite(_)
                | DistLqrError::InvalidModel(_)
                | DistLqrError::NonZeroMean
                | DistLqrError::TooFewSamples { .. }
                | DistLqrError::TargetTooSmall { .. } => 1,
                _ => 2,
            },
        }
    }
}
