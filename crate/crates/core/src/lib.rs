//! Low-rank matrix completion through column-sparse factorizations.
//!
//! The model fits `X Y^T` to the observed entries of a matrix while charging
//! `lambda` for every nonzero column of `X` and `Y`, with each column kept in a
//! Euclidean ball. Two alternating proximal solvers with backtracking are
//! provided, along with a data-driven path over `lambda`, synthetic and
//! real-data benchmark generators, and JSON/CSV reporting.

pub mod data_bench;
pub mod error;
pub mod lambda_path;
pub mod obskernel;
pub mod regprox;
pub mod report;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
pub use obskernel::{FactorPair, Matrix, ObservationSet};
pub use solver::{solve, SolveReport, SolverConfig, Variant};
