//! Learned difference-of-convex (DC) regularization for linear inverse problems.
//!
//! The crate is organized around three pillars:
//!
//! * **Regularizer learning** — input-convex networks ([`icnn`]) trained with a
//!   critic-style adversarial loss ([`train`]) on top of a small reverse-mode
//!   tape ([`autodiff`]).
//! * **Reconstruction** — forward operators and measurement simulation
//!   ([`linops`]) plus three DC-aware solvers with built-in convergence
//!   certificates ([`solve`]).
//! * **Geometry** — star bodies, radial functions, harmonic combinations and
//!   dual mixed volumes ([`stargeom`]), which realize the gauge-based view of
//!   optimal regularizers numerically.
//!
//! [`bench`] holds the desk-scale experiment harnesses (double spiral,
//! small simulated CT) and image metrics.
//!
//! The crate is `no_std` + `alloc`; all transcendental math goes through
//! `libm` so results are bit-reproducible across platforms. Everything that
//! consumes randomness takes an explicit seeded generator.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod bench;
pub mod error;
pub mod fp;
pub mod icnn;
pub mod la;
pub mod linops;
pub mod rng;
pub mod solve;
pub mod stargeom;
pub mod tensor;
pub mod train;

pub use error::CoreError;
pub use tensor::Tensor;

/// Crate result alias.
pub type Result<T> = core::result::Result<T, CoreError>;
