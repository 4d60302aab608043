//! Error type shared by the solver modules.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by graph construction, the elliptic solver and the
/// particle simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A graph specification violates a validity constraint
    /// (non-monotone table, exponent below one, negative threshold, ...).
    InvalidGraph(String),
    /// A numeric argument is outside its admissible range.
    InvalidParameter(String),
    /// The nonlinear Gauss–Seidel solver did not reach the requested
    /// defect tolerance within the sweep cap. Carries the last residual.
    NonConvergence { sweeps: usize, residual: f64 },
    /// A quantity that must hold by construction failed to; indicates a
    /// bug or corrupted input rather than a user error.
    InvariantViolation(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGraph(msg) => write!(f, "invalid graph spec: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NonConvergence { sweeps, residual } => write!(
                f,
                "elliptic solve did not converge after {sweeps} sweeps (residual {residual:e})"
            ),
            Error::InvariantViolation(msg) => write!(f, "invariant violation: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
