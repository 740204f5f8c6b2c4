//! Standard-form convex quadratic programs and an operator-splitting solver.
//!
//! The solver alternates a regularized linear solve with a projection onto the
//! constraint box (over-relaxed ADMM on `l <= A x <= u`), rebalances its step
//! from the residual ratio, and finishes by polishing: it guesses the active
//! set from the current iterate and solves the reduced KKT system exactly.
//! A polished point is accepted only after its residuals pass the tolerance.

mod dump;
mod kkt;
mod linalg;
mod problem;
mod solver;
mod sparse;

pub use dump::{read_problem, write_problem};
pub use kkt::{kkt_residuals, KktResiduals};
pub use linalg::{Cholesky, Ldlt};
pub use problem::{EqConstraints, IneqConstraints, QpProblem, VarTag};
pub use solver::{solve_qp, QpSettings, QpSolver};
pub use sparse::SparseMatrix;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch in {what}: got {got}, expected {want}")]
    Dimension {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("quadratic cost matrix is not symmetric")]
    NotSymmetric,
    #[error("quadratic cost matrix is not positive semidefinite")]
    NotPsd,
    #[error("inequality row {row} has lo > hi")]
    InvertedBounds { row: usize },
    #[error("problem data contains NaN or infinite coefficients")]
    NonFinite,
    #[error("reduced system could not be factored")]
    Factorization,
    #[error("malformed problem file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub duals: Duals,
    pub status: QpStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub objective: f64,
    /// Whether the reported point came from the active-set polish step.
    pub polished: bool,
}
