//! Quasi-Newton proximal extragradient (QNPE) solver.
//!
//! The solver combines an inexact proximal step, computed with a conjugate
//! residual solve and a backtracking line search, with an extragradient
//! correction. Its Hessian approximation is learned online: every time the
//! line search backtracks, the rejected trial point yields a secant-style loss
//! and the approximation takes a projection-free online gradient step over
//! matrices with spectrum in `[mu, l1]`.
//!
//! Modules:
//! - [`types`]: objective contract, configuration, trace records.
//! - [`problems`]: quadratic and logistic generators, Matrix Market input.
//! - [`linsolve`]: conjugate residual solver.
//! - [`eig`]: Lanczos and exact separation oracles.
//! - [`learner`]: online Hessian approximation.
//! - [`line_search`]: backtracking step-size search.
//! - [`solver`]: main loop.
//! - [`verify`]: post-hoc certificates over a trace.
//! - [`baselines`]: gradient descent and BFGS.

pub mod baselines;
pub mod eig;
pub mod error;
pub mod learner;
pub mod line_search;
pub mod linsolve;
pub mod problems;
pub mod solver;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use types::{
    validate_config, Curvature, FnObjective, InitialHessian, IterationRecord, Matrix, Method, Objective,
    OracleMode, SolverConfig, SolverReport, Termination, Vector,
};
