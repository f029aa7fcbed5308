//! Adaptive line-search solver for robust strict-saddle low-rank matrix
//! problems `G(W) = f(UVᵀ) + ⅛‖UᵀU − VᵀV‖²_F` with `W = [U; V]`.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod linalg;
pub mod meo;
pub mod objective;
pub mod problem;
pub mod solver;

pub use error::{Result, SaddleError};
pub use factor::{balanced_factorization, factor_distance, procrustes_align, Direction, FactorPair};
pub use meo::{min_eig_oracle, MeoOutcome, SymmetricOperator};
pub use objective::ObjectiveHandle;
pub use problem::{synthetic_instance, InstanceSpec, Problem, ProblemKind, ProblemOracle, SyntheticInstance};
pub use solver::{solve, SolveResult, SolverConfig, Trace};
