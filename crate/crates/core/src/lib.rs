//! Marginal-variance normalization for lattice basis-function models on
//! regular grids.
//!
//! Three interchangeable ways to compute `Var(g(s)) = phi_s^T Q^{-1} phi_s`
//! for a SAR precision `Q = B B^T`: sparse Cholesky ([`sar`]), the
//! Kronecker-sum eigensystem ([`kron`]) and Fourier interpolation of coarse
//! exact values ([`fftnorm`]). [`model`] builds multi-resolution models on
//! top of them.

pub mod basis;
pub mod error;
pub mod fftnorm;
pub mod grid;
pub mod kron;
pub mod model;
pub mod sar;

pub use error::{Error, Result};
