use brm_core::BrmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Core(#[from] BrmError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 0 ok, 2 usage, 3 divergence, 4 verification or invariant failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Verification(_) => 4,
            CliError::Core(e) => match e {
                BrmError::Divergence { .. } => 3,
                BrmError::Precondition(_)
                | BrmError::Domain(_)
                | BrmError::ScheduleIncompatible { .. } => 2,
                BrmError::Format(_)
                | BrmError::InvalidModel(_)
                | BrmError::Dimension { .. }
                | BrmError::Json(_) => 4,
                _ => 1,
            },
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(BrmError::Json(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
