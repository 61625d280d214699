use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A negative pivot showed up during factorization.
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    /// A pivot vanished relative to its diagonal entry.
    #[error("matrix is singular (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },

    #[error("conjugate gradient breakdown at step {step}: d'Kd = {curvature:e}")]
    CgBreakdown { step: usize, curvature: f64 },

    #[error("degenerate Krylov space: {0}")]
    DegenerateKrylov(String),

    #[error("internal consistency violated: {0}")]
    Inconsistent(String),

    #[error("infeasible move constraints: {0}")]
    InfeasibleMove(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("size guard: {0}")]
    Guard(String),

    #[error("element {element}: {source}")]
    AtElement {
        element: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_element(self, element: usize) -> Self {
        Error::AtElement { element, source: Box::new(self) }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration { iteration, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
