//! Spectral estimation for weighted Laplace operators `Δ_f = Δ + α ∇log f · ∇`
//! on the flat torus, from i.i.d. samples of `f`.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod functional;
pub mod harness;
pub mod laplacian;
pub mod spectral;
pub mod torus;

pub use error::{Error, Result};
