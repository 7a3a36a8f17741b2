use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A Cholesky pivot fell below `1e-12 * max(diag)`.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The solver ran out of sweeps, or stopped making progress (`stalled`).
    #[error("solver did not converge after {sweeps} sweeps (kkt residual {residual:.3e}{})",
        if *stalled { ", stalled" } else { "" })]
    NotConverged {
        sweeps: usize,
        residual: f64,
        stalled: bool,
    },

    #[error("weight function violates class membership at t = {t}: {reason}")]
    ClassViolation { t: f64, reason: String },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// A pipeline stage failed; `stage` is 1-based.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Strips any `Stage` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
