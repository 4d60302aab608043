//! Closed-form reference solutions used as ground truth in benchmarks.
//!
//! All evaluators live on the convention `du/dt = (1/2) (beta(u))''`:
//! the identity graph gives the heat flow `N(0, s0^2 + t)`, and the
//! power-law graph `beta(u) = |u| u^(m-1)` admits the source-type
//! self-similar profile evaluated at time `t/2` (which absorbs the 1/2
//! in front of the spatial operator).

use libm::{exp, pow, sqrt, tgamma};

use crate::field::{Grid, GridField};
use crate::{Error, Result};

const PI: f64 = core::f64::consts::PI;

/// A reference solution `(t, x) -> u(t, x)`.
#[derive(Debug, Clone)]
pub enum ExactSolution {
    /// Gaussian of variance `sigma0^2 + t` (identity graph).
    Heat { sigma0: f64 },
    /// Source-type self-similar profile of mass `mass` for the power
    /// graph with exponent `m`.
    Barenblatt { m: f64, mass: f64 },
    /// Profile frozen in time (subcritical data under a degenerate
    /// graph with threshold above its sup).
    Stationary { profile: GridField },
}

impl ExactSolution {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            ExactSolution::Heat { sigma0 } => heat_exact(*sigma0, t, x),
            ExactSolution::Barenblatt { m, mass } => {
                barenblatt(*m, *mass, t, x).unwrap_or(f64::NAN)
            }
            ExactSolution::Stationary { profile } => profile.interpolate(x),
        }
    }

    /// Sample the solution at time `t` on a grid.
    pub fn sample(&self, grid: Grid, t: f64) -> GridField {
        GridField::from_fn(grid, |x| self.eval(t, x))
    }
}

/// Density of `N(0, sigma0^2 + t)` — the solution of `du/dt = u''/2`
/// from a centered Gaussian.
pub fn heat_exact(sigma0: f64, t: f64, x: f64) -> f64 {
    let var = sigma0 * sigma0 + t;
    exp(-0.5 * x * x / var) / sqrt(2.0 * PI * var)
}

/// Self-similar constants for `dv/ds = (v^m)''`: profile
/// `v(s,x) = s^-alpha (C - kappa x^2 s^(-2 alpha))_+^(1/(m-1))`.
fn barenblatt_constants(m: f64, mass: f64) -> (f64, f64, f64) {
    let alpha = 1.0 / (m + 1.0);
    let kappa = alpha * (m - 1.0) / (2.0 * m);
    // int_{-1}^{1} (1 - y^2)^(1/(m-1)) dy via the Beta function
    let q = 1.0 / (m - 1.0);
    let shape = sqrt(PI) * tgamma(q + 1.0) / tgamma(q + 1.5);
    let c = pow(mass * sqrt(kappa) / shape, 2.0 * (m - 1.0) / (m + 1.0));
    (alpha, kappa, c)
}

/// Source-type solution of `du/dt = (1/2)(u^m)''` with total mass `mass`,
/// evaluated at `(t, x)`; the self-similar clock runs at `s = t/2`.
pub fn barenblatt(m: f64, mass: f64, t: f64, x: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("need exponent m > 1, got {m}")));
    }
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("need positive mass, got {mass}")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "self-similar profile needs t > 0, got {t}"
        )));
    }
    let (alpha, kappa, c) = barenblatt_constants(m, mass);
    let s = 0.5 * t;
    let sa = pow(s, -alpha);
    let core = c - kappa * x * x * sa * sa;
    if core <= 0.0 {
        return Ok(0.0);
    }
    Ok(sa * pow(core, 1.0 / (m - 1.0)))
}

/// Position of the free boundary of [`barenblatt`] at time `t`.
pub fn barenblatt_front(m: f64, mass: f64, t: f64) -> Result<f64> {
    if !(m > 1.0) || !(mass > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidParameter("front needs m > 1, mass > 0, t > 0".into()));
    }
    let (alpha, kappa, c) = barenblatt_constants(m, mass);
    Ok(sqrt(c / kappa) * pow(0.5 * t, alpha))
}

/// Frozen-in-time oracle for subcritical data: valid when
/// `sup u0 < threshold`, where the graph vanishes on `[0, threshold)`.
pub fn stationary_subcritical(threshold: f64, u0: &GridField) -> Result<ExactSolution> {
    let sup = crate::field::linf_norm(u0);
    if !(sup < threshold) {
        return Err(Error::InvalidParameter(alloc::format!(
            "data with sup {sup} is not strictly below the threshold {threshold}"
        )));
    }
    Ok(ExactSolution::Stationary { profile: u0.clone() })
}
