//! Finite-horizon distributed LQG synthesis.
//!
//! The crate evaluates exact closed-loop LQG costs in a stacked compact
//! form, tests information-structure properties (quadratic invariance and
//! its strong variant), synthesizes sparsity- or subspace-constrained
//! output-feedback controllers by projected gradient descent with Wolfe
//! line search, and independently cross-checks optima through a convex
//! reformulation in the disturbance-feedback (Q) domain.
//!
//! Everything is deterministic for a fixed seed, including the randomized
//! structural tests and the Monte-Carlo validator, regardless of thread
//! count.

pub mod cost;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod problem;
pub mod qp;
pub mod subspace;
pub mod ustest;

#[cfg(test)]
pub(crate) mod testutil;

pub use cost::{
    cost_k, cost_q, grad_k, grad_q, h_inv, h_map, monte_carlo_cost, McEstimate, QDomainQuadratic,
};
pub use error::{Error, Result};
pub use model::{
    assemble_compact, closed_loop_trajectories, validate_system_data, ClosedLoopMap, CompactSystem,
    SystemData, Trajectories,
};
pub use optimize::{
    multi_start, pick_best, projected_gradient_descent, random_init, wolfe_bisection, Certificate,
    OptimizerConfig, SynthesisReport,
};
pub use problem::{matrix_rows, parse_controller_str, parse_problem_str, Problem};
pub use qp::{
    recover_controller, reduce_quadratic, solve_q_domain, solve_reduced, QSolution,
    ReducedQuadratic,
};
pub use subspace::{
    causal_indices, causal_mask, is_causal, qi_test_binary, qi_test_definition, require_causal,
    QiDefinition, QiWitness, SparsityPattern, SubspaceKind, SubspaceSpec,
};
pub use ustest::{
    restricted_hessian, sampled_convexity_test, us_via_strong_qi, RestrictedCost, UsCertificate,
    UsEvidence, UsVerdict,
};
