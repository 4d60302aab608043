//! Checkable consequences of the flow: mass and norm stability, the
//! energy trace and its dissipation balance, the diffusivity field
//! `chi = sqrt(w/u)` and its regularity, and the second-moment budget.
//!
//! Everything here is a pure function of a [`Trajectory`]; reports are
//! bit-reproducible given identical inputs. Violations are report
//! content, not errors — a corrupted trajectory yields a report that
//! says so.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::sqrt;

use crate::elliptic::grad_sq_integral;
use crate::field::{compensated_sum, integrate, linf_norm, total_variation, GridField};
use crate::semigroup::Trajectory;
use crate::{Error, Result};

/// Relative floor under which `u` is treated as vanished when forming
/// `chi`; avoids 0/0 noise where both `u` and `w` are zero.
const CHI_FLOOR_REL: f64 = 1e-12;
/// Tolerance on negative `w/u` ratios before they are an error.
const CHI_NEG_TOL: f64 = 1e-9;

/// Energy `Gamma(u) = int j(u) dx` for each snapshot; non-increasing
/// along any trajectory of the scheme.
pub fn energy_trace(traj: &Trajectory) -> Vec<f64> {
    (0..traj.len()).map(|j| snapshot_energy(traj, j)).collect()
}

fn snapshot_energy(traj: &Trajectory, j: usize) -> f64 {
    let f = traj.u(j);
    let g = traj.graph();
    f.grid().spacing() * compensated_sum(f.values().iter().map(|&x| g.potential(x)))
}

/// Signed defect of the energy–dissipation balance over the whole run:
///
/// `Gamma(u_N) - Gamma(u_0) + (1/2) sum_j dt * int (w_j')^2`.
///
/// Non-positive for every run (the per-step estimate gives `<=`);
/// shrinks to zero under space–time refinement when the graph is
/// surjective (e.g. after `regularize`), where the balance is an
/// identity.
pub fn dissipation_residual(traj: &Trajectory) -> f64 {
    let n = traj.len() - 1;
    let dissipated =
        0.5 * traj.dt() * compensated_sum((1..=n).map(|j| grad_sq_integral(traj.w(j))));
    snapshot_energy(traj, n) - snapshot_energy(traj, 0) + dissipated
}

/// Pointwise diffusivity `chi_i = sqrt(w_i/u_i)` where `u_i` exceeds
/// the floor `1e-12 * max u`, and `0` elsewhere (negative `u` is
/// clamped first). Errors if some ratio is negative beyond tolerance:
/// `u*w >= 0` must hold for a monotone graph through the origin.
pub fn chi_field(u: &GridField, w: &GridField) -> Result<GridField> {
    let floor = CHI_FLOOR_REL * linf_norm(u);
    let mut chi = Vec::with_capacity(u.values().len());
    for (i, (&ui, &wi)) in u.values().iter().zip(w.values()).enumerate() {
        let ui = ui.max(0.0);
        if ui > floor {
            let ratio = wi / ui;
            if ratio < -CHI_NEG_TOL {
                return Err(Error::InvariantViolation(format!(
                    "negative diffusivity ratio w/u = {ratio} at node {i}"
                )));
            }
            chi.push(sqrt(ratio.max(0.0)));
        } else {
            chi.push(0.0);
        }
    }
    GridField::new(u.grid(), chi)
}

/// Per-snapshot maximum nodal jump `max_i |chi_{i+1} - chi_i|` — the
/// grid proxy for continuity of `chi(t, .)`. For graphs that vanish up
/// to a threshold and increase strictly past it, this statistic decays
/// under grid refinement (away from `t = 0`).
pub fn chi_regularity(traj: &Trajectory) -> Result<Vec<f64>> {
    (0..traj.len())
        .map(|j| {
            let chi = chi_field(traj.u(j), traj.w(j))?;
            Ok(chi.values().windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max))
        })
        .collect()
}

/// Second-moment budget: growth of `int x^2 u` on the left against the
/// time-integrated flux mass `dt * sum_j int w_j` on the right. They
/// agree up to `O(h + dt)` plus boundary leakage, which vanishes for
/// data supported well inside the domain.
pub fn second_moment_balance(traj: &Trajectory) -> (f64, f64) {
    let moment = |f: &GridField| {
        let g = f.grid();
        g.spacing()
            * compensated_sum(
                f.values().iter().enumerate().map(|(i, &v)| g.node(i) * g.node(i) * v),
            )
    };
    let lhs = moment(traj.final_u()) - moment(traj.u(0));
    let rhs = traj.dt() * compensated_sum((1..traj.len()).map(|j| integrate(traj.w(j))));
    (lhs, rhs)
}

/// Acceptance thresholds for [`invariant_report`]. Defaults are the
/// exact-identity budgets the implicit scheme meets; loosen them when
/// injecting externally sampled trajectories (quadrature-level data).
#[derive(Debug, Clone, Copy)]
pub struct ReportThresholds {
    /// Mass drift, relative to the initial mass.
    pub mass_rel: f64,
    /// Undershoot allowance on `min u`.
    pub min_u: f64,
    /// Allowance on `|u(t)|_inf - |u_0|_inf`.
    pub linf_growth: f64,
    /// Allowance on `TV(u(t)) - TV(u_0)`.
    pub tv_growth: f64,
    /// Per-step energy inequality slack.
    pub energy_step: f64,
    /// Slack on `chi <= sqrt(c)` and on `|w|_inf <= c |u_0|_inf`.
    pub bound_tol: f64,
}

impl Default for ReportThresholds {
    fn default() -> Self {
        ReportThresholds {
            mass_rel: 1e-12,
            min_u: 1e-12,
            linf_growth: 1e-10,
            tv_growth: 1e-8,
            energy_step: 1e-10,
            bound_tol: 1e-9,
        }
    }
}

/// One snapshot's worth of scalar diagnostics.
#[derive(Debug, Clone)]
pub struct SnapshotRow {
    pub time: f64,
    pub mass: f64,
    pub linf: f64,
    pub energy: f64,
    pub total_variation: f64,
    pub min_u: f64,
    /// `max(|u| at the two boundary nodes)` — truncation monitor.
    pub boundary_abs: f64,
    pub chi_max: f64,
    pub chi_max_jump: f64,
    /// `int (w')^2` for this snapshot's selection.
    pub grad_sq: f64,
}

/// A flagged invariant failure.
#[derive(Debug, Clone)]
pub struct Violation {
    pub time_index: usize,
    pub what: String,
}

/// Full per-run report.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub rows: Vec<SnapshotRow>,
    /// Signed energy-balance defect (see [`dissipation_residual`]).
    pub dissipation_residual: f64,
    /// Worst per-step violation of the energy inequality (<= 0 when it
    /// holds everywhere).
    pub max_energy_violation: f64,
    pub max_chi_jump: f64,
    /// `max_j int (w_j')^2` — gradient-square monitor.
    pub max_grad_sq: f64,
    /// Worst per-step growth of the `L^1` distance to a companion
    /// trajectory (pair mode only).
    pub contraction_defect: Option<f64>,
    pub violations: Vec<Violation>,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluate every checkable invariant of a trajectory with the default
/// (solver-exact) thresholds.
pub fn invariant_report(traj: &Trajectory) -> DiagnosticsReport {
    invariant_report_with(traj, ReportThresholds::default())
}

/// As [`invariant_report`] with explicit thresholds.
pub fn invariant_report_with(traj: &Trajectory, thr: ReportThresholds) -> DiagnosticsReport {
    let mut rows = Vec::with_capacity(traj.len());
    let mut violations = Vec::new();
    let mass0 = integrate(traj.u(0));
    let linf0 = linf_norm(traj.u(0));
    let tv0 = total_variation(traj.u(0));
    let growth = traj.graph().growth_constant_on(linf0.max(f64::MIN_POSITIVE));
    let chi_bound = sqrt(growth);

    let mut prev_energy = f64::INFINITY;
    let mut max_energy_violation = f64::NEG_INFINITY;
    let mut max_chi_jump = 0.0_f64;
    let mut max_grad_sq = 0.0_f64;

    for j in 0..traj.len() {
        let u = traj.u(j);
        let w = traj.w(j);
        let n = u.values().len();
        let mass = integrate(u);
        let linf = linf_norm(u);
        let energy = snapshot_energy(traj, j);
        let tv = total_variation(u);
        let min_u = u.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let boundary_abs = u.values()[0].abs().max(u.values()[n - 1].abs());
        let grad_sq = grad_sq_integral(w);

        let (chi_max, chi_max_jump) = match chi_field(u, w) {
            Ok(chi) => {
                let m = chi.values().iter().cloned().fold(0.0, f64::max);
                let jump =
                    chi.values().windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
                (m, jump)
            }
            Err(e) => {
                violations.push(Violation { time_index: j, what: format!("{e}") });
                (f64::NAN, f64::NAN)
            }
        };

        if (mass - mass0).abs() > thr.mass_rel * mass0.abs() {
            violations.push(Violation {
                time_index: j,
                what: format!("mass drift {:.3e} exceeds budget", mass - mass0),
            });
        }
        if min_u < -thr.min_u {
            violations
                .push(Violation { time_index: j, what: format!("negative density {min_u:.3e}") });
        }
        if linf > linf0 + thr.linf_growth {
            violations.push(Violation {
                time_index: j,
                what: format!("sup norm grew by {:.3e}", linf - linf0),
            });
        }
        if tv > tv0 + thr.tv_growth {
            violations.push(Violation {
                time_index: j,
                what: format!("total variation grew by {:.3e}", tv - tv0),
            });
        }
        if linf_norm(w) > growth * linf0 + thr.bound_tol {
            violations.push(Violation {
                time_index: j,
                what: format!("selection sup {:.3e} above growth bound", linf_norm(w)),
            });
        }
        if chi_max.is_finite() && chi_max > chi_bound + thr.bound_tol {
            violations.push(Violation {
                time_index: j,
                what: format!("chi max {chi_max:.3e} above sqrt(c) = {chi_bound:.3e}"),
            });
        }
        if j > 0 {
            let dissipated = 0.5 * traj.dt() * grad_sq;
            let excess = energy + dissipated - prev_energy;
            max_energy_violation = max_energy_violation.max(excess);
            if excess > thr.energy_step {
                violations.push(Violation {
                    time_index: j,
                    what: format!("energy inequality violated by {excess:.3e}"),
                });
            }
            max_chi_jump = max_chi_jump.max(chi_max_jump);
        }
        max_grad_sq = max_grad_sq.max(grad_sq);
        prev_energy = energy;

        rows.push(SnapshotRow {
            time: traj.time(j),
            mass,
            linf,
            energy,
            total_variation: tv,
            min_u,
            boundary_abs,
            chi_max,
            chi_max_jump,
            grad_sq,
        });
    }

    DiagnosticsReport {
        rows,
        dissipation_residual: dissipation_residual(traj),
        max_energy_violation,
        max_chi_jump,
        max_grad_sq,
        contraction_defect: None,
        violations,
    }
}

/// Pair mode: everything from [`invariant_report`] on `a`, plus the
/// worst per-step growth of `|a - b|_1`.
pub fn invariant_report_pair(a: &Trajectory, b: &Trajectory) -> DiagnosticsReport {
    let mut report = invariant_report(a);
    let defect = crate::semigroup::pairwise_contraction_defect(a, b);
    if defect > 1e-10 {
        report
            .violations
            .push(Violation { time_index: 0, what: format!("pair contraction defect {defect:.3e}") });
    }
    report.contraction_defect = Some(defect);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::graph::{build_graph, GraphSpec, MonotoneGraph};
    use crate::semigroup::evolve;
    use approx::assert_relative_eq;
    use libm::exp;
    use std::vec;

    const PI: f64 = core::f64::consts::PI;

    fn heaviside(ec: f64) -> MonotoneGraph {
        build_graph(&GraphSpec::Heaviside { threshold: ec }).unwrap()
    }
    fn linear() -> MonotoneGraph {
        build_graph(&GraphSpec::Linear { slope: 1.0 }).unwrap()
    }

    fn box_datum(grid: Grid, height: f64, half: f64) -> GridField {
        GridField::from_fn(grid, move |x| if x.abs() < half { height } else { 0.0 })
    }

    fn heat_traj(n: usize, steps: usize) -> Trajectory {
        let grid = Grid::new(10.0, n).unwrap();
        let u0 = GridField::from_fn(grid, |x| exp(-0.5 * x * x) / sqrt(2.0 * PI));
        evolve(&linear(), &u0, 1.0, steps).unwrap()
    }

    #[test]
    fn energy_trace_constant_below_threshold() {
        let grid = Grid::new(2.0, 80).unwrap();
        let traj = evolve(&heaviside(1.0), &box_datum(grid, 0.9, 0.5), 0.5, 10).unwrap();
        for g in energy_trace(&traj) {
            assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn energy_trace_matches_heat_closed_form() {
        // Gamma(t) = (1/2) int u^2 = 1/(4 sqrt(pi (1 + t)))
        let traj = heat_traj(400, 40);
        let trace = energy_trace(&traj);
        for (j, gamma) in trace.iter().enumerate() {
            let t = traj.time(j);
            let exact = 0.25 / sqrt(PI * (1.0 + t));
            assert_relative_eq!(*gamma, exact, max_relative = 0.05);
        }
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10);
        }
    }

    #[test]
    fn dissipation_residual_shrinks_under_refinement_for_identity_graph() {
        let coarse = dissipation_residual(&heat_traj(200, 20)).abs();
        let fine = dissipation_residual(&heat_traj(400, 40)).abs();
        assert!(fine < coarse, "residual {coarse} -> {fine}");
        assert!(fine / coarse <= 0.7, "refinement gain too small: {}", fine / coarse);
    }

    #[test]
    fn dissipation_defect_is_signed_for_degenerate_graph() {
        let grid = Grid::new(2.0, 100).unwrap();
        let traj = evolve(&heaviside(1.0), &box_datum(grid, 1.5, 1.0 / 3.0), 0.3, 20).unwrap();
        let r = dissipation_residual(&traj);
        assert!(r <= 1e-10, "signed residual {r}");
    }

    #[test]
    fn dissipation_residual_shrinks_for_regularized_heaviside() {
        let g = heaviside(1.0).regularize(0.05).unwrap();
        let run = |n: usize, steps: usize| {
            let grid = Grid::new(2.0, n).unwrap();
            dissipation_residual(&evolve(&g, &box_datum(grid, 1.5, 1.0 / 3.0), 0.3, steps).unwrap())
                .abs()
        };
        let coarse = run(100, 15);
        let fine = run(200, 30);
        assert!(fine < coarse, "residual {coarse} -> {fine}");
    }

    #[test]
    fn chi_field_cases() {
        let grid = Grid::new(1.0, 4).unwrap();
        let u = GridField::new(grid, vec![2.0, 0.0, 1.0, 2.0]).unwrap();
        let w = GridField::new(grid, vec![2.0, 0.0, 1.0, 0.5]).unwrap();
        let chi = chi_field(&u, &w).unwrap();
        assert_relative_eq!(chi.values()[0], 1.0);
        assert_eq!(chi.values()[1], 0.0);
        assert_relative_eq!(chi.values()[3], 0.5);

        let bad = GridField::new(grid, vec![-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(chi_field(&u, &bad).is_err());
    }

    #[test]
    fn chi_is_one_on_support_for_identity_graph() {
        let traj = heat_traj(200, 10);
        let chi = chi_field(traj.u(5), traj.w(5)).unwrap();
        let u = traj.u(5);
        for (c, &uv) in chi.values().iter().zip(u.values()) {
            if uv > 1e-6 {
                assert_relative_eq!(*c, 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn chi_jumps_shrink_under_grid_refinement() {
        let run = |n: usize| {
            let grid = Grid::new(2.0, n).unwrap();
            let traj =
                evolve(&heaviside(1.0), &box_datum(grid, 1.5, 1.0 / 3.0), 0.3, 30).unwrap();
            chi_regularity(&traj).unwrap()
        };
        let coarse = run(100);
        let fine = run(200);
        // away from t = 0 the initial discontinuity has entered the
        // filled jump; count how often refinement helps
        let improved = coarse
            .iter()
            .zip(&fine)
            .skip(1)
            .filter(|(c, f)| **f <= **c + 1e-12)
            .count();
        assert!(
            improved * 10 >= 9 * (coarse.len() - 1),
            "chi jumps failed to shrink: {improved}/{}",
            coarse.len() - 1
        );
    }

    #[test]
    fn second_moment_balance_identity_graph() {
        // variance grows linearly: lhs = rhs = t for unit mass
        let traj = heat_traj(400, 40);
        let (lhs, rhs) = second_moment_balance(&traj);
        assert_relative_eq!(lhs, 1.0, max_relative = 0.05);
        assert_relative_eq!(rhs, 1.0, max_relative = 0.05);
        assert!((lhs - rhs).abs() < 0.05);
    }

    #[test]
    fn second_moment_balance_stationary() {
        let grid = Grid::new(2.0, 80).unwrap();
        let traj = evolve(&heaviside(1.0), &box_datum(grid, 0.9, 0.5), 0.5, 10).unwrap();
        let (lhs, rhs) = second_moment_balance(&traj);
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn invariant_report_passes_on_valid_runs() {
        let grid = Grid::new(2.0, 100).unwrap();
        let traj = evolve(&heaviside(1.0), &box_datum(grid, 1.5, 1.0 / 3.0), 0.3, 20).unwrap();
        let report = invariant_report(&traj);
        assert!(report.passed(), "violations: {:?}", report.violations);
        assert!(report.max_energy_violation <= 1e-10);
        assert!(report.max_grad_sq.is_finite());
        assert_eq!(report.rows.len(), 21);
    }

    #[test]
    fn corrupted_trajectory_is_flagged() {
        let grid = Grid::new(2.0, 100).unwrap();
        let traj = evolve(&heaviside(1.0), &box_datum(grid, 1.5, 1.0 / 3.0), 0.3, 10).unwrap();
        let mut u: Vec<GridField> = (0..traj.len()).map(|j| traj.u(j).clone()).collect();
        let w: Vec<GridField> = (0..traj.len()).map(|j| traj.w(j).clone()).collect();
        let scaled: Vec<f64> = u[5].values().iter().map(|v| 1.1 * v).collect();
        u[5] = GridField::new(grid, scaled).unwrap();
        let bad = Trajectory::from_parts(traj.graph().clone(), traj.dt(), u, w).unwrap();
        let report = invariant_report(&bad);
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .any(|v| v.time_index == 5 && v.what.contains("mass")));
    }

    #[test]
    fn pair_report_carries_contraction_defect() {
        let grid = Grid::new(2.0, 80).unwrap();
        let a = evolve(&heaviside(1.0), &box_datum(grid, 1.5, 1.0 / 3.0), 0.3, 10).unwrap();
        let b = evolve(&heaviside(1.0), &box_datum(grid, 1.2, 0.4), 0.3, 10).unwrap();
        let report = invariant_report_pair(&a, &b);
        let defect = report.contraction_defect.unwrap();
        assert!(defect <= 1e-10, "contraction defect {defect}");
        assert!(report.passed());
    }

    /// Reference solutions, sampled on the solver grid and injected as
    /// trajectories, satisfy the physical invariants at quadrature-level
    /// thresholds.
    #[test]
    fn oracles_pass_injected_invariant_report() {
        use crate::oracles::{barenblatt, heat_exact};
        // midpoint quadrature of a profile with a support kink carries
        // O(h^2)-level mass error, so the drift budget is looser here
        let thr = ReportThresholds {
            mass_rel: 1e-4,
            min_u: 0.0,
            linf_growth: 1e-12,
            tv_growth: 1e-9,
            energy_step: 1e-3,
            bound_tol: 1e-9,
        };

        let grid = Grid::new(12.0, 600).unwrap();
        let (dt, steps) = (0.1, 10);
        let mk = |f: &dyn Fn(f64, f64) -> f64, graph: MonotoneGraph| {
            let u: Vec<GridField> = (0..=steps)
                .map(|j| GridField::from_fn(grid, |x| f(j as f64 * dt, x)))
                .collect();
            let w: Vec<GridField> = u
                .iter()
                .map(|uj| {
                    GridField::new(
                        grid,
                        uj.values().iter().map(|&v| graph.minimal_section(v)).collect(),
                    )
                    .unwrap()
                })
                .collect();
            Trajectory::from_parts(graph, dt, u, w).unwrap()
        };

        let heat = mk(&|t, x| heat_exact(1.0, t, x), linear());
        let report = invariant_report_with(&heat, thr);
        assert!(report.passed(), "heat oracle: {:?}", report.violations);

        let pme = mk(
            &|t, x| barenblatt(2.0, 1.0, 1.0 + t, x).unwrap(),
            build_graph(&GraphSpec::Power { exponent: 2.0 }).unwrap(),
        );
        let report = invariant_report_with(&pme, thr);
        assert!(report.passed(), "self-similar oracle: {:?}", report.violations);
    }
}
