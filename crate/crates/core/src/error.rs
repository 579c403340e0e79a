//! Crate-wide error type.

use nalgebra::DMatrix;
use thiserror::Error;

/// Everything that can go wrong across validation, structure tests,
/// optimization, and file ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// A sequence length or matrix shape does not match the declared dims.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: String,
        got: String,
    },

    /// A matrix required to be positive semidefinite is not.
    #[error("{what} is not positive semidefinite (min eigenvalue {eigenvalue:.3e})")]
    NotPsd { what: String, eigenvalue: f64 },

    /// A matrix required to be positive definite is not.
    #[error("{what} is not positive definite (min eigenvalue {eigenvalue:.3e})")]
    NotPd { what: String, eigenvalue: f64 },

    /// A controller matrix has support above the block diagonal.
    #[error("controller is not causal: nonzero entry above the block diagonal at ({row}, {col})")]
    NonCausalController { row: usize, col: usize },

    /// A sparsity pattern has support above the block diagonal.
    #[error(
        "sparsity pattern is not causal: nonzero entry above the block diagonal at ({row}, {col})"
    )]
    NonCausalPattern { row: usize, col: usize },

    /// An operation defined only for one subspace kind was called on another.
    #[error("operation requires a {expected} subspace, got {got}")]
    WrongSubspaceKind {
        expected: &'static str,
        got: &'static str,
    },

    /// Line search was handed a direction with nonnegative initial slope.
    #[error("line search requires a descent direction (initial slope {slope:.3e} >= 0)")]
    NotDescent { slope: f64 },

    /// The Wolfe bisection exhausted its refinement budget.
    #[error("line search found no Wolfe point within {probes} refinements")]
    LineSearchStall { probes: usize },

    /// The optimizer aborted mid-run; carries the iterate for post-mortem.
    #[error("optimization aborted at iteration {iteration} (J = {cost:.6e}): {source}")]
    OptimizeAborted {
        iteration: usize,
        cost: f64,
        iterate: Box<DMatrix<f64>>,
        #[source]
        source: Box<Error>,
    },

    /// SPD factorization of the reduced Q-domain Hessian failed.
    #[error(
        "reduced Q-domain Hessian is numerically indefinite; \
         a positivity assumption (e.g. SigmaV > 0) is violated"
    )]
    NumericallyIndefinite,

    /// A controller recovered under a QI claim left the subspace.
    #[error(
        "recovered controller leaves the subspace (residual {residual:.3e}) despite the QI claim"
    )]
    SubspaceEscape { residual: f64 },

    /// An optimizer or estimator configuration violates its invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A problem or controller file is structurally valid JSON but malformed.
    #[error("problem file: {0}")]
    ProblemFormat(String),

    /// JSON syntax error (carries line/column from the parser).
    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
