use thiserror::Error;

pub type Result<T, E = BrmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BrmError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("coverage failure: state-action pairs {missing:?} below the visit requirement")]
    Coverage { missing: Vec<(usize, usize)> },

    #[error("state-action pair ({s}, {a}) has no dual coordinate")]
    DualCoverage { s: usize, a: usize },

    #[error("SGDA diverged at step {t}: non-finite iterate")]
    Divergence { t: usize, w: Vec<f64>, v: Vec<f64> },

    #[error("constant estimation failed: {0}")]
    Estimation(String),

    #[error("step-size schedule incompatible with bound: 1 - a*c1 = {margin:e} must be positive")]
    ScheduleIncompatible { margin: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BrmError {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        BrmError::Precondition(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        BrmError::Domain(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(BrmError::Dimension {
            what,
            expected,
            got,
        })
    }
}
