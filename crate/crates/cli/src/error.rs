use ionfringe_core::CoreError;
use thiserror::Error;

/// Process-level errors with stable exit codes:
/// 1 internal, 2 configuration, 3 I/O, 4 sampling, 5 convergence.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Sampling(_) => 4,
            CliError::Convergence(_) => 5,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::Config(_) | CoreError::Observation(_) => CliError::Config(e.to_string()),
            CoreError::Sampling(_) | CoreError::Range(_) | CoreError::Resource(_) => {
                CliError::Sampling(e.to_string())
            }
            CoreError::NonConvergence { .. } | CoreError::Singular { .. } => {
                CliError::Convergence(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
