use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("exponent out of range: {0}")]
    OutOfRange(String),

    #[error("atom budget exceeded: {atoms} atoms requested, budget {budget}")]
    BudgetExceeded { atoms: u128, budget: u64 },

    /// Carries the best objective value reached before the iteration cap.
    #[error("optimizer did not converge within {iterations} iterations (best value {best})")]
    NonConvergence { best: f64, iterations: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidInput(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::ShapeMismatch(msg.into()))
}

pub(crate) fn out_of_range<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::OutOfRange(msg.into()))
}
