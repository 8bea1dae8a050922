//! Dense and sparse linear algebra, Krylov and direct solvers, and the
//! small LP/QP routines used by the penalty engine.

mod dense;
mod gmres;
mod lp;
mod oracle;
mod sparse;

pub use dense::{pseudo_inverse, solve_dense, DenseMatrix};
pub use gmres::{gmres, GmresResult, LinearOperator};
pub use lp::{solve_lp, LpSolution};
pub use oracle::prox_oracle_qp;
pub use sparse::{sparse_direct_solve, SparseLu, SparseMatrix};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("singular pivot encountered")]
    Singular,
    #[error("operation not supported by this operator")]
    Unsupported,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
