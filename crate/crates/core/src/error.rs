use thiserror::Error;

/// Errors raised by the solvers and containers in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The inner preconditioner could not be factorized.
    #[error("singular inner preconditioner{}", match .step { Some(i) => format!(" at time step {i}"), None => String::new() })]
    Singular { step: Option<usize> },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A non-finite value appeared in one block of the coupled iteration.
    #[error("divergence in {block} block at iteration {iteration}")]
    Divergence { block: &'static str, iteration: usize },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Singular { .. } => Error::Singular { step: Some(step) },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
