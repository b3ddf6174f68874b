use thiserror::Error;

/// Errors surfaced by the solver core.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("non-finite values encountered in {0}")]
    NonFinite(String),

    #[error("stability guard violated: {0}")]
    GuardViolation(String),

    #[error("truth trajectory unavailable at t = {0}")]
    MissingTruth(f64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical divergence at t = {t}: {what}")]
    Divergence { t: f64, what: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        CoreError::InvalidParam {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
