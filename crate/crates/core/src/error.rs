use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A standing hypothesis of the theory fails (theta threshold, r(N) <= 0, ...).
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("state outside the unit ball: norm {norm}")]
    OutsideBall { norm: f64 },

    #[error("sigma inverse unavailable on mode {mode}: diffusion entry is zero")]
    SigmaInverse { mode: usize },

    #[error("beta bound violated at step {step}: |beta| = {beta_norm} > {bound}")]
    BetaBound {
        step: usize,
        beta_norm: f64,
        bound: f64,
    },
}

impl LabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LabError::InvalidArgument(msg.into())
    }

    pub(crate) fn hypothesis(msg: impl Into<String>) -> Self {
        LabError::HypothesisViolation(msg.into())
    }
}
