//! Spectral representation of zero-mean scalar fields on the circle and the
//! operator toolbox built on it.
//!
//! Everything downstream (time stepping, diagnostics, coupling experiments)
//! works with [`Field`] coefficients against the orthonormal real basis
//!
//! ```text
//! e_k(x) = cos(k x) / sqrt(pi)   for k >= 1,
//! e_k(x) = sin(-k x) / sqrt(pi)  for k <= -1,
//! ```
//!
//! so that ||f||_L2^2 = sum_k f_k^2 and the homogeneous Sobolev norms are
//! plain weighted coefficient sums. Physical-space work (products for the
//! nonlinear term, L^p norms) goes through [`Transform`], which owns FFT
//! plans for a validated [`GridSpec`].

mod field;
mod grid;
mod transform;

pub use field::{Field, SobolevIndex};
pub use grid::GridSpec;
pub use transform::Transform;
