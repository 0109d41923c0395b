//! Random walks in random scenery: simulation, the sequential empirical
//! process of the scenery seen along the walk, its Gaussian limits, and the
//! change-point test built on it.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod empirical;
pub mod error;
pub mod harness;
pub mod inference;
pub mod lattice;
pub mod limits;
pub mod rng;
pub mod scenery;
pub mod walk;

pub use error::{Error, Result};
