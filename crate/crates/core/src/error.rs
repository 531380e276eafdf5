use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("function is not uniquely minimized at 0: {0}")]
    NotMinimizedAtZero(String),
    #[error("noise law puts no mass off zero; assumption P(Z != 0) > 0 violated")]
    DegenerateNoise,
    #[error("a Cauchy component needs a Lipschitz function; the functional is unbounded in w and not integrable")]
    UnboundedFunctional,
    #[error("no convergence after {iterations} iterations (max residual {max_residual:e})")]
    NoConvergence {
        iterations: usize,
        max_residual: f64,
        residuals: Vec<f64>,
    },
    #[error("assumption violated: {0}")]
    InvalidAssumption(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("minimizer is not unique: {0}")]
    Unbounded(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Validation errors are rejected before any computation starts.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NotMinimizedAtZero(_)
                | Error::DegenerateNoise
                | Error::UnboundedFunctional
                | Error::InvalidAssumption(_)
                | Error::InvalidInput(_)
        )
    }
}
