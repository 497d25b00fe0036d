//! Pseudo-spectral simulator and ergodicity laboratory for a stochastically
//! forced generalized Constantin–Lax–Majda model on the circle.
//!
//! The state is the vorticity-like scalar w(t, x) on S^1 = R/2piZ with zero
//! mean, evolving under
//!
//! ```text
//! dw = [ nu * w_xx + B_a(w) ] dt + dxi,      B_a(w) = u_x w - a u w_x,
//! ```
//!
//! where the velocity gradient is the Hilbert transform of w (u_x = H(w)),
//! u is recovered mode-wise as u_k = -w_k / |k|, `a` dials the relative
//! strength of advection, and dxi is a Gaussian forcing that is white in
//! time and colored in space. The crate provides:
//!
//! * [`spectral`] — real-basis spectral fields, FFT transforms, the
//!   dealiased nonlinear term, and the operator toolbox (Hilbert transform,
//!   derivatives, Sobolev norms, Galerkin projection);
//! * [`forcing`] — forcing amplitude profiles, counter-based reproducible
//!   noise streams, and the exact Ornstein–Uhlenbeck (stochastic heat) step;
//! * [`integrator`] — time steppers (exponential Euler–Maruyama, IMEX Euler,
//!   deterministic RK4), trajectory state, blow-up detection, observers, and
//!   refinement studies;
//! * [`diagnostics`] — energy/enstrophy spectra, spectral enstrophy flux,
//!   Sobolev moment tracking, exponential-moment certificates, and
//!   time-averaged (Krylov–Bogoliubov style) observables;
//! * [`ergodicity`] — synchronously coupled trajectory pairs, mixing-rate
//!   fits, contraction-threshold reports, and multi-initial-data uniqueness
//!   probes;
//! * [`config`] / [`io`] — declarative TOML run configuration, deterministic
//!   binary checkpoints, CSV/JSON artifact emitters, and run manifests.
//!
//! Parallelism: ensemble computations use rayon when the `parallel` feature
//! (enabled by default) is active; a sequential driver is always available
//! and is benchmarked against the parallel one in `benches/`.

pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod ergodicity;
pub mod error;
pub mod forcing;
pub mod integrator;
pub mod io;
pub mod selftest;
pub mod spectral;
pub(crate) mod util;

pub use error::{Error, Result};
