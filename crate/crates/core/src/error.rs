use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The measure profile is not strictly positive on the support.
    #[error("domain error: {0}")]
    Domain(String),

    /// An integrand or model quantity evaluated to a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A fixed-point or root solve did not converge.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    /// The operation is only defined in the other regime (d versus d_+).
    #[error("regime error: {0}")]
    Regime(String),

    /// A bracketing scan found no sign change.
    #[error("root error: {0}")]
    Root(String),

    /// Dense linear algebra failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// More Monte-Carlo trials failed than the run tolerates.
    #[error("run error: {failed} of {total} trials failed")]
    Run { failed: usize, total: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
