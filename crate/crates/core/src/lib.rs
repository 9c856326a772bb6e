//! Atomistic-to-continuum coupling by geometric reconstruction on the
//! triangular lattice.

// `!(x > tol)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod consistency;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod potential;
pub mod solve;
pub mod sparse;

pub use error::{Error, Result};
