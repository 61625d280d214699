//! Discrete (binary-density) topology optimization for compliance minimization.
//!
//! The crate covers the finite element model, sparse direct and iterative
//! solvers, selective inversion, finite-variation sensitivity analysis
//! (naive, first-order, series, Woodbury and conjugate-gradient estimates),
//! and an evolutionary optimizer that ranks elements by those sensitivities.

// Index loops mirror the formulas; negated comparisons are there to reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod beso;
pub mod error;
pub mod fem;
pub mod fvsa;
pub mod linalg;
pub mod selective_inverse;

pub use error::{Error, Result};
