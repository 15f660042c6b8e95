//! Randomized row-sampling sketches, the inversion bias they induce in
//! sketched Gram inverses, and corrections for it, together with
//! sub-sampled Newton solvers built on top.

// `!(x > t)` is used on purpose so that NaN fails the check.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::needless_range_loop
)]

pub mod bias_lab;
pub mod datasets;
pub mod debias;
pub mod error;
pub mod hadamard;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod sampling;

#[cfg(test)]
mod test_util;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SymmetricPsd};
