//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature self-test failed: {0}")]
    QuadratureSelfTest(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("window boundary within {separation:e} of an eigenvalue; shift the window")]
    DegenerateWindow { separation: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e}): {context}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        context: String,
    },

    #[error("tolerance not reached: requested {requested:e}, certified {achieved:e} (partial value {partial})")]
    ToleranceNotReached {
        requested: f64,
        achieved: f64,
        partial: f64,
    },

    #[error("certification failure: {0}")]
    CertificationFailure(String),

    #[error("retraction diverged after {steps} steps; X-distances {distances:?}")]
    Divergence { steps: usize, distances: Vec<f64> },

    #[error("internal consistency violation: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
