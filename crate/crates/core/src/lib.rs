//! Vector-valued multibang control: polyhedral penalties, their Moreau-Yosida
//! regularization, semismooth Newton solvers and three model problems.

pub mod bloch;
pub mod config;
pub mod elasticity;
pub mod experiments;
pub mod numerics;
pub mod penalty;
pub mod ssn;
pub mod transport;
pub mod verify;

pub use numerics::{DenseMatrix, SparseMatrix};
pub use penalty::{AdmissibleSet, CostKind, CostSpec, Penalty, PenaltyEngine, YosidaMap};
pub use ssn::{IterationStats, SolverConfig};
