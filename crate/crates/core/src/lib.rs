//! Solver core for the degenerate diffusion equation
//! `du/dt = (1/2) (beta(u))''` with a multivalued maximal monotone
//! coefficient `beta`, together with the particle simulator for the
//! associated stochastic representation `dY = chi_u(t, Y) dW`.
//!
//! Everything here is pure computation over heap-allocated fields; the
//! crate is `no_std` (with `alloc`) and all IO, file formats and the CLI
//! live in the companion `degdiff` crate.
//!
//! The layers, bottom to top:
//!
//! - [`graph`]: multivalued monotone graphs and their scalar kernels
//!   (resolvent, minimal section, potential, diffusivity section);
//! - [`field`]: uniform-grid fields and discrete calculus;
//! - [`elliptic`]: the monotone elliptic inclusion `u - (l/2) Dw = f`,
//!   `w in beta(u)` — one resolvent application;
//! - [`semigroup`]: implicit time stepping (iterated resolvents) and the
//!   regularized-coefficient family;
//! - [`diagnostics`]: mass/energy/variation/chi checks of a computed
//!   trajectory;
//! - [`particles`]: Euler–Maruyama ensembles and law-vs-density metrics;
//! - [`oracles`]: closed-form reference solutions for benchmarks.

#![no_std]
// `!(x > 0.0)` is used on purpose in argument guards: unlike `x <= 0.0`
// it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod graph;
pub mod oracles;
pub mod particles;
pub mod semigroup;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
