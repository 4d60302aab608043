//! Batch front-end for the degenerate-diffusion solver: run
//! configurations, artifact formats, and oracle comparisons.

// `!(x > 0.0)` in validation guards also rejects NaN; keep it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod io;
pub mod runner;

pub use config::RunConfig;
pub use runner::{compare, diagnose, run, RunOutcome};
