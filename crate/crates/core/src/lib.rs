//! Allocation of on-board multi-user detection work across cooperating
//! satellites: which satellite detects which user, trading sum rate against
//! the per-satellite processing load.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod polytope;
pub mod rate;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::{Matrix, Tensor3};
