//! Particle realization of the representing diffusion
//! `dY = chi(t, Y) dW` and statistical comparison of its law against the
//! grid solution.
//!
//! Two simulators are provided. The coupled mode freezes the diffusivity
//! per time step to `chi` built from the trajectory's `(u_j, w_j)` —
//! matching the piecewise-constant-in-time selection the stepping scheme
//! produces — and is the mode acceptance rests on. The self-consistent
//! mode closes the loop through a kernel density estimate of the
//! ensemble itself; it realizes the nonlinear equation directly and is
//! exploratory (the degenerate problem may admit several solutions).
//!
//! Randomness: every particle draws from its own counter-indexed ChaCha
//! stream derived from the master seed, so results are a pure function
//! of `(inputs, seed)` no matter how the particle loop is scheduled.

use alloc::vec::Vec;

use libm::{exp, sqrt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diagnostics::chi_field;
use crate::field::{integrate, Cdf, GridField};
use crate::graph::MonotoneGraph;
use crate::semigroup::Trajectory;
use crate::{Error, Result};

/// Particle positions at one time, tagged with the master seed they
/// descend from. Particle `i` owns ChaCha stream `i + 1`; stream 0 is
/// reserved for initialization.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub time: f64,
    pub master_seed: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean(&self) -> f64 {
        crate::field::compensated_sum(self.positions.iter().copied()) / self.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        crate::field::compensated_sum(self.positions.iter().map(|&y| (y - m) * (y - m)))
            / self.len() as f64
    }
}

/// Ensemble snapshots at the trajectory's step times.
#[derive(Debug, Clone)]
pub struct EnsemblePath {
    states: Vec<ParticleEnsemble>,
}

impl EnsemblePath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn at(&self, j: usize) -> &ParticleEnsemble {
        &self.states[j]
    }

    pub fn initial(&self) -> &ParticleEnsemble {
        &self.states[0]
    }

    pub fn terminal(&self) -> &ParticleEnsemble {
        self.states.last().unwrap()
    }
}

/// How initial positions are drawn from `u_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSampling {
    /// Inverse CDF at the shuffled quantiles `(i + 1/2)/N` — stratified,
    /// lower variance, same law.
    Stratified,
    /// Inverse CDF at independent uniforms.
    Iid,
}

fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Draw `n` initial positions with law density `u0`.
fn sample_initial(u0: &GridField, n: usize, seed: u64, init: InitSampling) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let cdf = Cdf::new(u0)?;
    let mut rng = stream_rng(seed, 0);
    let mut quantiles: Vec<f64> = match init {
        InitSampling::Stratified => (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect(),
        InitSampling::Iid => {
            // each particle's uniform comes from its own stream so the
            // draw does not depend on the ensemble size
            return Ok((0..n)
                .map(|i| cdf.quantile(stream_rng(seed, i as u64 + 1).gen::<f64>()))
                .collect());
        }
    };
    quantiles.shuffle(&mut rng);
    Ok(quantiles.into_iter().map(|q| cdf.quantile(q)).collect())
}

/// Reflect into `[-l, l]` (the particle counterpart of the zero-flux
/// truncation).
fn reflect(mut y: f64, l: f64) -> f64 {
    for _ in 0..16 {
        if y > l {
            y = 2.0 * l - y;
        } else if y < -l {
            y = -2.0 * l - y;
        } else {
            return y;
        }
    }
    y.clamp(-l, l)
}

/// Euler–Maruyama ensemble driven by the trajectory's diffusivity,
/// frozen per step: during `(t_{j-1}, t_j]` particles feel `chi` built
/// from `(u_j, w_j)`, linearly interpolated in space. Snapshots are
/// taken at every step time.
pub fn simulate_coupled(
    traj: &Trajectory,
    n_particles: usize,
    substeps: usize,
    seed: u64,
) -> Result<EnsemblePath> {
    simulate_coupled_with(traj, n_particles, substeps, seed, InitSampling::Stratified)
}

/// As [`simulate_coupled`] with an explicit initial-sampling mode.
pub fn simulate_coupled_with(
    traj: &Trajectory,
    n_particles: usize,
    substeps: usize,
    seed: u64,
    init: InitSampling,
) -> Result<EnsemblePath> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("need at least one substep".into()));
    }
    let grid = traj.u(0).grid();
    let l = grid.half_width();
    let mut positions = sample_initial(traj.u(0), n_particles, seed, init)?;
    let mut rngs: Vec<ChaCha8Rng> =
        (0..n_particles).map(|i| stream_rng(seed, i as u64 + 1)).collect();

    let mut states = Vec::with_capacity(traj.len());
    states.push(ParticleEnsemble { positions: positions.clone(), time: 0.0, master_seed: seed });

    let dt_sub = traj.dt() / substeps as f64;
    let root_dt = sqrt(dt_sub);
    for j in 1..traj.len() {
        let chi = chi_field(traj.u(j), traj.w(j))?;
        for (y, rng) in positions.iter_mut().zip(rngs.iter_mut()) {
            for _ in 0..substeps {
                let xi: f64 = StandardNormal.sample(rng);
                let c = chi.interpolate(*y);
                if c != 0.0 {
                    *y = reflect(*y + c * root_dt * xi, l);
                }
            }
        }
        states.push(ParticleEnsemble {
            positions: positions.clone(),
            time: traj.time(j),
            master_seed: seed,
        });
    }
    Ok(EnsemblePath { states })
}

/// Self-consistent ensemble: at each step the density is estimated from
/// the particles themselves (Gaussian kernel, given bandwidth, evaluated
/// on the grid) and the diffusivity is the graph's `phi` section of that
/// estimate. One Euler–Maruyama step per time step.
pub fn simulate_selfconsistent(
    graph: &MonotoneGraph,
    u0: &GridField,
    horizon: f64,
    steps: usize,
    n_particles: usize,
    bandwidth: f64,
    seed: u64,
) -> Result<EnsemblePath> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!(
            "kernel bandwidth must be positive, got {bandwidth}"
        )));
    }
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidParameter("need steps >= 1 and a positive horizon".into()));
    }
    let grid = u0.grid();
    let l = grid.half_width();
    let mut positions = sample_initial(u0, n_particles, seed, InitSampling::Stratified)?;
    let mut rngs: Vec<ChaCha8Rng> =
        (0..n_particles).map(|i| stream_rng(seed, i as u64 + 1)).collect();

    let mut states = Vec::with_capacity(steps + 1);
    states.push(ParticleEnsemble { positions: positions.clone(), time: 0.0, master_seed: seed });

    let dt = horizon / steps as f64;
    let root_dt = sqrt(dt);
    for j in 1..=steps {
        let density = kernel_density(&positions, grid, bandwidth);
        for (y, rng) in positions.iter_mut().zip(rngs.iter_mut()) {
            let xi: f64 = StandardNormal.sample(rng);
            let phi = graph.phi_section(density.interpolate(*y));
            if phi != 0.0 {
                *y = reflect(*y + phi * root_dt * xi, l);
            }
        }
        states.push(ParticleEnsemble {
            positions: positions.clone(),
            time: j as f64 * dt,
            master_seed: seed,
        });
    }
    Ok(EnsemblePath { states })
}

/// Gaussian kernel density estimate of a sample, evaluated at the grid
/// nodes. Kernel tails are cut at eight bandwidths.
pub fn kernel_density(sample: &[f64], grid: crate::field::Grid, bandwidth: f64) -> GridField {
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let norm = 1.0 / (sample.len() as f64 * bandwidth * sqrt(2.0 * core::f64::consts::PI));
    let cut = 8.0 * bandwidth;
    GridField::from_fn(grid, |x| {
        let lo = sorted.partition_point(|&y| y < x - cut);
        let hi = sorted.partition_point(|&y| y <= x + cut);
        let mut acc = 0.0;
        for &y in &sorted[lo..hi] {
            let z = (x - y) / bandwidth;
            acc += exp(-0.5 * z * z);
        }
        acc * norm
    })
}

/// Classical plug-in bandwidth `1.06 std N^(-1/5)`.
pub fn default_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = crate::field::compensated_sum(sample.iter().copied()) / n;
    let var = crate::field::compensated_sum(sample.iter().map(|&y| (y - mean) * (y - mean))) / n;
    (1.06 * sqrt(var) * libm::pow(n, -0.2)).max(1e-12)
}

/// Distances between an empirical law and a grid density.
#[derive(Debug, Clone, Copy)]
pub struct LawComparison {
    pub time: f64,
    /// Sup distance between the empirical CDF and the density's CDF.
    pub ks: f64,
    /// Mean absolute quantile mismatch at plotting positions.
    pub wasserstein1: f64,
    /// `L^1` distance between the cell histogram and the nodal density.
    pub histogram_l1: f64,
    pub sample_size: usize,
}

/// Compare an ensemble against a non-negative grid density (mass is
/// normalized away).
pub fn law_distance(ensemble: &ParticleEnsemble, density: &GridField) -> Result<LawComparison> {
    let cdf = Cdf::new(density)?;
    let mut sorted = ensemble.positions.clone();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let nf = n as f64;

    let mut ks = 0.0_f64;
    let mut w1 = 0.0_f64;
    for (k, &y) in sorted.iter().enumerate() {
        let f = cdf.eval(y);
        ks = ks.max((f - k as f64 / nf).abs()).max(((k + 1) as f64 / nf - f).abs());
        w1 += (y - cdf.quantile((k as f64 + 0.5) / nf)).abs();
    }
    w1 /= nf;

    let grid = density.grid();
    let h = grid.spacing();
    let mass = integrate(density);
    let mut counts = alloc::vec![0usize; grid.len()];
    for &y in &sorted {
        counts[grid.cell_of(y)] += 1;
    }
    let hist_l1 = counts
        .iter()
        .zip(density.values())
        .map(|(&c, &v)| (c as f64 / (nf * h) - v.max(0.0) / mass).abs())
        .sum::<f64>()
        * h;

    Ok(LawComparison {
        time: ensemble.time,
        ks,
        wasserstein1: w1,
        histogram_l1: hist_l1,
        sample_size: n,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < xs.len() && j < ys.len() {
        // advance both past the next value so ties move the CDFs together
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Mean absolute difference of order statistics (equal sample sizes).
pub fn w1_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter(
            "quantile-matched distance needs equal, non-zero sample sizes".into(),
        ));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    Ok(crate::field::compensated_sum(xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()))
        / a.len() as f64)
}

/// One row of the variance budget: empirical variance growth against
/// the time-integrated flux mass, with a 4-sigma Monte-Carlo halfwidth.
#[derive(Debug, Clone, Copy)]
pub struct MomentRow {
    pub time: f64,
    pub variance_growth: f64,
    pub flux_integral: f64,
    pub mc_halfwidth: f64,
}

/// Cross-check the martingale second moment: per snapshot,
/// `Var(Y_t) - Var(Y_0)` should match `dt * sum_{k<=j} int w_k`.
pub fn moment_check(path: &EnsemblePath, traj: &Trajectory) -> Vec<MomentRow> {
    let var0 = path.initial().variance();
    let n = path.initial().len() as f64;
    let mut flux = 0.0;
    let mut rows = Vec::with_capacity(path.len());
    for j in 0..path.len().min(traj.len()) {
        if j > 0 {
            flux += traj.dt() * integrate(traj.w(j));
        }
        let ens = path.at(j);
        let var = ens.variance();
        // spread of (Y - mean)^2 controls the variance estimator noise
        let mean = ens.mean();
        let m4 = crate::field::compensated_sum(ens.positions.iter().map(|&y| {
            let d = (y - mean) * (y - mean);
            d * d
        })) / n;
        let halfwidth = 4.0 * sqrt((m4 - var * var).max(0.0) / n);
        rows.push(MomentRow {
            time: ens.time,
            variance_growth: var - var0,
            flux_integral: flux,
            mc_halfwidth: halfwidth,
        });
    }
    rows
}

/// Martingale mean test: `(drift, bound)` with
/// `drift = |mean(Y_T) - mean(Y_0)|` and `bound = 4 std(Y_T)/sqrt(N)`.
pub fn mean_drift(path: &EnsemblePath) -> (f64, f64) {
    let drift = (path.terminal().mean() - path.initial().mean()).abs();
    let bound = 4.0 * sqrt(path.terminal().variance() / path.terminal().len() as f64);
    (drift, bound)
}

/// Largest `E|Y_t - Y_s|^4 / (t - s)^2` over dyadic step lags — the
/// fourth-moment scaling a bounded-diffusivity martingale must satisfy.
pub fn fourth_moment_scaling(path: &EnsemblePath) -> f64 {
    let steps = path.len() - 1;
    if steps == 0 {
        return 0.0;
    }
    let n = path.initial().len() as f64;
    let mut worst = 0.0_f64;
    let mut lag = 1;
    while lag <= steps {
        for s in (0..=steps - lag).step_by(lag) {
            let a = &path.at(s).positions;
            let b = &path.at(s + lag).positions;
            let m4 = crate::field::compensated_sum(a.iter().zip(b).map(|(&ya, &yb)| {
                let d = yb - ya;
                d * d * d * d
            })) / n;
            let span = path.at(s + lag).time - path.at(s).time;
            worst = worst.max(m4 / (span * span));
        }
        lag *= 2;
    }
    worst
}
