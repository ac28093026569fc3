//! Simulation and exact distribution theory for one-sided reflected Brownian
//! motions.

// Negated comparisons are the NaN-rejecting form of every argument check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference constants keep every digit of the high-precision values they quote.
#![allow(clippy::excessive_precision)]

pub mod airylim;
pub mod dynamics;
pub mod error;
pub mod paths;
mod quad;
pub mod finitet;
pub mod fredholm;
pub mod harness;
pub mod specfun;

pub use error::{Error, Result};
