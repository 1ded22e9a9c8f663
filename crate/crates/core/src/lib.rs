//! Primitives for fully sparse 2:4 training of feed-forward layers.
//!
//! All three training GEMMs (forward, input gradient, weight gradient) take a
//! 2:4 sparse operand: weights through transposable masks, output gradients
//! through an unbiased stochastic 2-of-4 estimator.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod ffn;
pub mod matrix;
pub mod optim;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod sparsity;
pub mod spmm;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::{Layout, Matrix, Real};
