//! Reduced-order hemodynamics on vessel centerline graphs.
//!
//! The crate is `no_std` with `alloc`. Enable the `std` feature for runtime
//! CPU feature detection in the matrix kernels.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod datagen;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hemo1d;
pub mod mgn;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
