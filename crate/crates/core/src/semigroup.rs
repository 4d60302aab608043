//! Implicit time stepping for `du/dt = (1/2) (beta(u))''`.
//!
//! The evolution is built exactly as the nonlinear-semigroup limit
//! suggests: `u_j` solves the elliptic inclusion with data `u_{j-1}` and
//! step weight `dt`, i.e. `u(t) ~ J_dt^j u_0`. The per-step selection
//! `w_j in beta(u_j)` is kept alongside `u_j`; as a function of time it
//! is the piecewise-constant field equal to `w_j` on `(t_{j-1}, t_j]`,
//! which is the natural discrete stand-in for the flux `eta_u`.

use alloc::vec;
use alloc::vec::Vec;

use libm::log2;

use crate::elliptic::{solve_inclusion_with, SolverOpts};
use crate::field::{l1_distance, linf_norm, GridField};
use crate::graph::MonotoneGraph;
use crate::{Error, Result};

/// Time-indexed sequence of `(u_j, w_j)` snapshots on a uniform time
/// grid `t_j = j*dt`, including the initial state at `j = 0` (where the
/// selection is the minimal section of `u_0`).
#[derive(Debug, Clone)]
pub struct Trajectory {
    graph: MonotoneGraph,
    dt: f64,
    u: Vec<GridField>,
    w: Vec<GridField>,
    /// Gauss–Seidel sweeps spent on each step (0 for the initial slot).
    sweeps: Vec<usize>,
}

impl Trajectory {
    /// Assemble a trajectory from raw snapshot data (e.g. read back from
    /// disk, or sampled from a reference solution).
    pub fn from_parts(
        graph: MonotoneGraph,
        dt: f64,
        u: Vec<GridField>,
        w: Vec<GridField>,
    ) -> Result<Trajectory> {
        if u.is_empty() || u.len() != w.len() {
            return Err(Error::InvalidParameter(
                "need equal, non-zero numbers of u and w snapshots".into(),
            ));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "step size must be positive, got {dt}"
            )));
        }
        let grid = u[0].grid();
        if u.iter().chain(w.iter()).any(|f| f.grid() != grid) {
            return Err(Error::InvalidParameter("snapshots must share one grid".into()));
        }
        let sweeps = vec![0; u.len()];
        Ok(Trajectory { graph, dt, u, w, sweeps })
    }

    /// Number of stored snapshots (`steps + 1`).
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Number of time steps.
    pub fn steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn graph(&self) -> &MonotoneGraph {
        &self.graph
    }

    pub fn u(&self, j: usize) -> &GridField {
        &self.u[j]
    }

    /// Selection `w_j in beta(u_j)`; equals the flux field on
    /// `(t_{j-1}, t_j]`.
    pub fn w(&self, j: usize) -> &GridField {
        &self.w[j]
    }

    pub fn final_u(&self) -> &GridField {
        self.u.last().unwrap()
    }

    /// Total elliptic solver sweeps spent on this trajectory.
    pub fn total_sweeps(&self) -> usize {
        self.sweeps.iter().sum()
    }
}

/// Run `steps` implicit steps of size `T/steps` from `u0 >= 0`.
pub fn evolve(
    graph: &MonotoneGraph,
    u0: &GridField,
    horizon: f64,
    steps: usize,
) -> Result<Trajectory> {
    evolve_with(graph, u0, horizon, steps, SolverOpts::default())
}

/// As [`evolve`], with explicit elliptic solver controls.
pub fn evolve_with(
    graph: &MonotoneGraph,
    u0: &GridField,
    horizon: f64,
    steps: usize,
    opts: SolverOpts,
) -> Result<Trajectory> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!(
            "time horizon must be positive, got {horizon}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("need at least one time step".into()));
    }
    if u0.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("initial datum must be non-negative".into()));
    }
    let dt = horizon / steps as f64;
    let w0 = GridField::new(
        u0.grid(),
        u0.values().iter().map(|&x| graph.minimal_section(x)).collect(),
    )?;
    let mut u = vec![u0.clone()];
    let mut w = vec![w0];
    for j in 1..=steps {
        let prev_w = w[j - 1].values().to_vec();
        let sol = solve_inclusion_with(graph, &u[j - 1], dt, 0.0, Some(&prev_w), opts)?;
        u.push(sol.u);
        w.push(sol.w);
    }
    Ok(Trajectory { graph: graph.clone(), dt, u, w })
}

/// Evolve once per regularization weight in `eps_list` (positive,
/// decreasing), using `beta + eps*id`; also returns the sup-over-time
/// `L^1` distances between consecutive trajectories.
pub fn epsilon_continuation(
    graph: &MonotoneGraph,
    u0: &GridField,
    horizon: f64,
    steps: usize,
    eps_list: &[f64],
) -> Result<(Vec<Trajectory>, Vec<f64>)> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("regularization list must be non-empty".into()));
    }
    if eps_list.windows(2).any(|p| p[1] >= p[0]) || eps_list.iter().any(|&e| e <= 0.0) {
        return Err(Error::InvalidParameter(
            "regularization list must be positive and strictly decreasing".into(),
        ));
    }
    let trajectories: Vec<Trajectory> = eps_list
        .iter()
        .map(|&eps| evolve(&graph.regularize(eps)?, u0, horizon, steps))
        .collect::<Result<_>>()?;
    let distances = trajectories
        .windows(2)
        .map(|pair| {
            (0..pair[0].len())
                .map(|j| l1_distance(pair[0].u(j), pair[1].u(j)))
                .fold(0.0_f64, f64::max)
        })
        .collect();
    Ok((trajectories, distances))
}

/// Self-convergence study over a doubling ladder of step counts.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    /// Step counts `N_k`.
    pub steps: Vec<usize>,
    /// `e_k = |u_{N_k}(T) - u_{N_{k+1}}(T)|_1` (one fewer than steps).
    pub errors: Vec<f64>,
    /// Observed orders `log2(e_k / e_{k+1})` (one fewer than errors).
    pub orders: Vec<f64>,
}

/// Compare final-time states across `steps_list` (strictly doubling).
pub fn self_convergence(
    graph: &MonotoneGraph,
    u0: &GridField,
    horizon: f64,
    steps_list: &[usize],
) -> Result<ConvergenceTable> {
    if steps_list.len() < 2 {
        return Err(Error::InvalidParameter("need at least two step counts".into()));
    }
    if steps_list.windows(2).any(|p| p[1] != 2 * p[0]) {
        return Err(Error::InvalidParameter("step counts must strictly double".into()));
    }
    let finals: Vec<GridField> = steps_list
        .iter()
        .map(|&n| Ok(evolve(graph, u0, horizon, n)?.final_u().clone()))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = finals.windows(2).map(|p| l1_distance(&p[0], &p[1])).collect();
    let orders = errors
        .windows(2)
        .map(|e| if e[1] > 0.0 { log2(e[0] / e[1]) } else { f64::INFINITY })
        .collect();
    Ok(ConvergenceTable { steps: steps_list.to_vec(), errors, orders })
}

/// Largest violation of the per-step `L^1` contraction between two
/// trajectories from different data (zero for an exact scheme).
pub fn pairwise_contraction_defect(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut worst = 0.0_f64;
    for j in 1..a.len().min(b.len()) {
        let now = l1_distance(a.u(j), b.u(j));
        let before = l1_distance(a.u(j - 1), b.u(j - 1));
        worst = worst.max(now - before);
    }
    worst
}

/// Sup-norm stability of one trajectory: max over steps of
/// `|u_j|_inf - |u_0|_inf` and of `|w_j|_inf - c |u_0|_inf`.
pub fn sup_norm_excess(traj: &Trajectory) -> (f64, f64) {
    let m0 = linf_norm(traj.u(0));
    let c = traj.graph().growth_constant_on(m0.max(1e-300));
    let mut u_excess = f64::NEG_INFINITY;
    let mut w_excess = f64::NEG_INFINITY;
    for j in 0..traj.len() {
        u_excess = u_excess.max(linf_norm(traj.u(j)) - m0);
        w_excess = w_excess.max(linf_norm(traj.w(j)) - c * m0);
    }
    (u_excess, w_excess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::grad_sq_integral;
    use crate::field::{integrate, total_variation, Grid};
    use crate::graph::{build_graph, GraphSpec};
    use approx::assert_relative_eq;
    use libm::{exp, sqrt};

    fn heaviside(ec: f64) -> MonotoneGraph {
        build_graph(&GraphSpec::Heaviside { threshold: ec }).unwrap()
    }
    fn linear() -> MonotoneGraph {
        build_graph(&GraphSpec::Linear { slope: 1.0 }).unwrap()
    }

    fn gaussian_density(sigma2: f64) -> impl Fn(f64) -> f64 {
        move |x| exp(-0.5 * x * x / sigma2) / sqrt(2.0 * core::f64::consts::PI * sigma2)
    }

    #[test]
    fn subcritical_data_is_exactly_stationary() {
        let g = heaviside(1.0);
        let grid = Grid::new(2.0, 80).unwrap();
        let u0 = GridField::from_fn(grid, |x| if x.abs() < 0.5 { 0.9 } else { 0.0 });
        let traj = evolve(&g, &u0, 1.0, 10).unwrap();
        for j in 0..traj.len() {
            assert_eq!(traj.u(j).values(), u0.values());
            assert!(traj.w(j).values().iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn identity_graph_reproduces_heat_flow() {
        let g = linear();
        let grid = Grid::new(10.0, 200).unwrap();
        let u0 = GridField::from_fn(grid, gaussian_density(1.0));
        let traj = evolve(&g, &u0, 1.0, 20).unwrap();
        let exact = GridField::from_fn(grid, gaussian_density(2.0));
        let err = l1_distance(traj.final_u(), &exact);
        assert!(err < 0.05, "L1 error vs heat kernel: {err}");
    }

    #[test]
    fn mass_and_positivity_hold_along_the_flow() {
        let g = heaviside(1.0);
        let grid = Grid::new(2.0, 160).unwrap();
        let u0 = GridField::from_fn(grid, |x| if x.abs() < 1.0 / 3.0 { 1.5 } else { 0.0 });
        let mass0 = integrate(&u0);
        let traj = evolve(&g, &u0, 0.3, 30).unwrap();
        for j in 0..traj.len() {
            assert!((integrate(traj.u(j)) - mass0).abs() <= 1e-12 * mass0);
            let min = traj.u(j).values().iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-12, "min u = {min} at step {j}");
        }
        let (ue, we) = sup_norm_excess(&traj);
        assert!(ue <= 1e-10, "sup-norm excess {ue}");
        assert!(we <= 1e-9, "selection excess {we}");
    }

    #[test]
    fn per_step_energy_inequality_and_monotone_energy() {
        let g = heaviside(1.0);
        let grid = Grid::new(2.0, 160).unwrap();
        let u0 = GridField::from_fn(grid, |x| if x.abs() < 1.0 / 3.0 { 1.5 } else { 0.0 });
        let traj = evolve(&g, &u0, 0.3, 30).unwrap();
        let h = grid.spacing();
        let energy = |f: &GridField| {
            h * crate::field::compensated_sum(f.values().iter().map(|&x| g.potential(x)))
        };
        let mut prev = energy(traj.u(0));
        for j in 1..traj.len() {
            let cur = energy(traj.u(j));
            let dissipated = 0.5 * traj.dt() * grad_sq_integral(traj.w(j));
            assert!(cur + dissipated <= prev + 1e-10, "step {j}: {cur} + {dissipated} > {prev}");
            assert!(cur <= prev + 1e-10);
            prev = cur;
        }
    }

    #[test]
    fn total_variation_does_not_grow_from_bv_data() {
        let g = heaviside(1.0);
        let grid = Grid::new(2.0, 160).unwrap();
        let u0 = GridField::from_fn(grid, |x| if x.abs() < 1.0 / 3.0 { 1.5 } else { 0.0 });
        let tv0 = total_variation(&u0);
        let traj = evolve(&g, &u0, 0.3, 30).unwrap();
        for j in 0..traj.len() {
            assert!(total_variation(traj.u(j)) <= tv0 + 1e-8);
        }
    }

    #[test]
    fn per_step_contraction_between_data() {
        let g = build_graph(&GraphSpec::Power { exponent: 2.0 }).unwrap();
        let grid = Grid::new(3.0, 120).unwrap();
        let u0 = GridField::from_fn(grid, |x| (1.0 - x * x).max(0.0));
        let v0 = GridField::from_fn(grid, |x| 0.8 * (1.0 - (x - 0.3) * (x - 0.3)).max(0.0));
        let a = evolve(&g, &u0, 0.5, 25).unwrap();
        let b = evolve(&g, &v0, 0.5, 25).unwrap();
        assert!(pairwise_contraction_defect(&a, &b) <= 1e-10);
    }

    #[test]
    fn self_convergence_orders() {
        let g = linear();
        let grid = Grid::new(8.0, 160).unwrap();
        let u0 = GridField::from_fn(grid, gaussian_density(1.0));
        let table = self_convergence(&g, &u0, 1.0, &[10, 20, 40, 80]).unwrap();
        assert!(table.errors.windows(2).all(|e| e[1] < e[0]));
        // backward Euler in time: first order
        for order in &table.orders {
            assert!((*order - 1.0).abs() < 0.35, "observed order {order}");
        }

        // stationary data: all ladder errors are exactly zero
        let g = heaviside(1.0);
        let sub = GridField::from_fn(grid, |x| if x.abs() < 0.5 { 0.9 } else { 0.0 });
        let table = self_convergence(&g, &sub, 1.0, &[10, 20, 40]).unwrap();
        assert!(table.errors.iter().all(|&e| e == 0.0));

        assert!(self_convergence(&g, &sub, 1.0, &[10, 30]).is_err());
    }

    #[test]
    fn degenerate_power_self_convergence_decreases() {
        let g = build_graph(&GraphSpec::Power { exponent: 2.0 }).unwrap();
        let grid = Grid::new(3.0, 150).unwrap();
        let u0 = GridField::from_fn(grid, |x| (0.6 - x * x).max(0.0));
        let table = self_convergence(&g, &u0, 0.5, &[8, 16, 32, 64]).unwrap();
        for e in table.errors.windows(2) {
            assert!(e[1] <= 0.75 * e[0], "ratio {}", e[1] / e[0]);
        }
    }

    #[test]
    fn epsilon_continuation_distances_shrink_linearly() {
        let g = heaviside(1.0);
        let grid = Grid::new(2.0, 120).unwrap();
        let u0 = GridField::from_fn(grid, |x| if x.abs() < 1.0 / 3.0 { 1.5 } else { 0.0 });
        let (trajs, dists) =
            epsilon_continuation(&g, &u0, 0.3, 30, &[0.2, 0.1, 0.05, 0.025]).unwrap();
        assert_eq!(trajs.len(), 4);
        assert_eq!(dists.len(), 3);
        for d in dists.windows(2) {
            assert!(d[1] < d[0]);
            assert!(d[1] <= 0.75 * d[0], "continuation ratio {}", d[1] / d[0]);
        }
        assert!(epsilon_continuation(&g, &u0, 0.3, 10, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn regularized_identity_tracks_scaled_heat_flow() {
        let eps = 0.5;
        let g = linear().regularize(eps).unwrap();
        let grid = Grid::new(10.0, 200).unwrap();
        let u0 = GridField::from_fn(grid, gaussian_density(1.0));
        let traj = evolve(&g, &u0, 1.0, 20).unwrap();
        let exact = GridField::from_fn(grid, gaussian_density(1.0 + (1.0 + eps)));
        let err = l1_distance(traj.final_u(), &exact);
        assert!(err < 0.05, "L1 error vs scaled heat kernel: {err}");
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let g = linear();
        let grid = Grid::new(1.0, 10).unwrap();
        let mut u0 = GridField::from_fn(grid, |_| 1.0);
        assert!(evolve(&g, &u0, 0.0, 5).is_err());
        assert!(evolve(&g, &u0, 1.0, 0).is_err());
        u0.values_mut()[3] = -0.5;
        assert!(evolve(&g, &u0, 1.0, 5).is_err());
    }

    #[test]
    fn snapshot_times_are_uniform() {
        let g = linear();
        let grid = Grid::new(1.0, 10).unwrap();
        let u0 = GridField::from_fn(grid, |_| 1.0);
        let traj = evolve(&g, &u0, 2.0, 4).unwrap();
        assert_eq!(traj.len(), 5);
        assert_relative_eq!(traj.dt(), 0.5);
        assert_relative_eq!(traj.time(3), 1.5);
    }
}
