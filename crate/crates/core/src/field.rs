//! Uniform cell-centered grids and discrete calculus on them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Uniform symmetric grid on `[-L, L]` with `n` cell-centered nodes
/// `x_i = -L + (i + 1/2) h`, `h = 2L/n`. No boundary nodes; fluxes live
/// on cell edges, which makes zero-flux stencils conserve mass exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_width: f64,
    n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Grid> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid half-width must be positive, got {half_width}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!("grid needs n >= 3 cells, got {n}")));
        }
        Ok(Grid { half_width, n })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell width `h = 2L/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Node coordinate `x_i`.
    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }

    /// Index of the cell containing `x`, clamped to the domain.
    pub fn cell_of(&self, x: f64) -> usize {
        let t = (x + self.half_width) / self.spacing();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.n - 1)
        }
    }
}

/// A function sampled at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<GridField> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field length {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: Grid) -> GridField {
        GridField { grid, values: vec![0.0; grid.len()] }
    }

    /// Sample `f` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> GridField {
        GridField { grid, values: grid.nodes().map(f).collect() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Piecewise-linear interpolation between nodes, constant beyond the
    /// first/last node.
    pub fn interpolate(&self, x: f64) -> f64 {
        let h = self.grid.spacing();
        let t = (x - self.grid.node(0)) / h;
        if t <= 0.0 {
            return self.values[0];
        }
        let n = self.values.len();
        if t >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = t as usize;
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Midpoint-rule integral `h * sum v_i`, accumulated with compensated
/// summation so the result is deterministic and accurate to O(eps).
pub fn integrate(v: &GridField) -> f64 {
    v.grid().spacing() * compensated_sum(v.values().iter().copied())
}

/// Neumaier variant of Kahan summation; fixed order, so bit-reproducible.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Total variation `sum |v_{i+1} - v_i|`.
pub fn total_variation(v: &GridField) -> f64 {
    v.values().windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Discrete `L^1` distance `h * sum |v_i - w_i|`.
pub fn l1_distance(v: &GridField, w: &GridField) -> f64 {
    debug_assert_eq!(v.grid(), w.grid());
    v.grid().spacing()
        * compensated_sum(v.values().iter().zip(w.values()).map(|(a, b)| (a - b).abs()))
}

/// Sup norm `max |v_i|`.
pub fn linf_norm(v: &GridField) -> f64 {
    v.values().iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Discrete `L^2` inner product `h * sum v_i w_i`.
pub fn l2_inner(v: &GridField, w: &GridField) -> f64 {
    debug_assert_eq!(v.grid(), w.grid());
    v.grid().spacing() * compensated_sum(v.values().iter().zip(w.values()).map(|(a, b)| a * b))
}

/// Continuous piecewise-linear CDF of a non-negative nodal density.
///
/// Knots are the domain edge, the nodes, and the other edge; the two
/// half-cells at the ends carry `v h/2` each so the total mass matches
/// [`integrate`] exactly.
#[derive(Debug, Clone)]
pub struct Cdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl Cdf {
    pub fn new(density: &GridField) -> Result<Cdf> {
        let g = density.grid();
        let h = g.spacing();
        let v: Vec<f64> = density.values().iter().map(|x| x.max(0.0)).collect();
        let n = v.len();
        let mut xs = Vec::with_capacity(n + 2);
        let mut cum = Vec::with_capacity(n + 2);
        xs.push(-g.half_width());
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..n {
            let seg = if i == 0 { v[0] * 0.5 * h } else { 0.5 * (v[i - 1] + v[i]) * h };
            acc += seg;
            xs.push(g.node(i));
            cum.push(acc);
        }
        acc += v[n - 1] * 0.5 * h;
        xs.push(g.half_width());
        cum.push(acc);
        if !(acc > 0.0) {
            return Err(Error::InvalidParameter("density has non-positive total mass".into()));
        }
        Ok(Cdf { xs, cum })
    }

    /// Total (unnormalized) mass.
    pub fn mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// CDF value at `x`, normalized to `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let m = self.mass();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let k = self.xs.partition_point(|&t| t <= x);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (c0, c1) = (self.cum[k - 1], self.cum[k]);
        let frac = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        (c0 + frac * (c1 - c0)) / m
    }

    /// Inverse CDF at quantile `q in [0, 1]`; monotone in `q`, maps 0 and
    /// 1 to the support edges.
    pub fn quantile(&self, q: f64) -> f64 {
        let m = self.mass();
        let target = q.clamp(0.0, 1.0) * m;
        if target >= m {
            // right support edge: last knot where mass still grows
            let k = self.cum.iter().rposition(|&c| c < m).map_or(0, |k| k + 1);
            return self.xs[k];
        }
        // first knot strictly above the target, so zero-mass segments
        // collapse to their left edge
        let k = self.cum.partition_point(|&c| c <= target);
        let (c0, c1) = (self.cum[k - 1], self.cum[k]);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        x0 + (target - c0) / (c1 - c0) * (x1 - x0)
    }
}

/// Inverse-CDF sampling: positions of the given quantiles under the
/// piecewise-linear CDF of `density`.
pub fn sample_inverse_cdf(density: &GridField, quantiles: &[f64]) -> Result<Vec<f64>> {
    let cdf = Cdf::new(density)?;
    Ok(quantiles.iter().map(|&q| cdf.quantile(q)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use libm::{exp, sqrt};
    use proptest::prelude::*;

    fn gaussian(x: f64) -> f64 {
        exp(-0.5 * x * x) / sqrt(2.0 * core::f64::consts::PI)
    }

    #[test]
    fn grid_nodes_are_symmetric() {
        let g = Grid::new(1.0, 10).unwrap();
        assert_relative_eq!(g.spacing(), 0.2);
        for i in 0..10 {
            assert_relative_eq!(g.node(i), -g.node(9 - i), epsilon = 1e-15);
        }
        assert!(Grid::new(1.0, 2).is_err());
        assert!(Grid::new(0.0, 10).is_err());
    }

    #[test]
    fn integrate_constant_and_odd() {
        let g = Grid::new(0.5, 10).unwrap();
        let ones = GridField::from_fn(g, |_| 1.0);
        assert_relative_eq!(integrate(&ones), 1.0, epsilon = 1e-15);
        let odd = GridField::from_fn(g, |x| x);
        assert_relative_eq!(integrate(&odd), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn integrate_gaussian_to_midpoint_accuracy() {
        let g = Grid::new(10.0, 2000).unwrap();
        let f = GridField::from_fn(g, gaussian);
        assert_relative_eq!(integrate(&f), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn total_variation_cases() {
        let g = Grid::new(1.0, 4).unwrap();
        let step = GridField::new(g, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(total_variation(&step), 1.0);
        let ramp = GridField::new(g, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(total_variation(&ramp), 3.0);
        let hat = GridField::new(g, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(total_variation(&hat), 2.0);
    }

    #[test]
    fn norms_match_hand_values() {
        let g = Grid::new(1.0, 4).unwrap(); // total length 2
        let zero = GridField::zeros(g);
        let one = GridField::from_fn(g, |_| 1.0);
        assert_relative_eq!(l1_distance(&zero, &one), 2.0);
        let v = GridField::new(g, vec![-3.0, 2.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(linf_norm(&v), 3.0);
        let g4 = Grid::new(2.0, 4).unwrap(); // total length 4
        let u = GridField::from_fn(g4, |_| 1.0);
        assert_relative_eq!(l2_inner(&u, &u), 4.0);
    }

    #[test]
    fn inverse_cdf_uniform_box() {
        // uniform density on [0,1] inside a [-2,2] grid
        let g = Grid::new(2.0, 400).unwrap();
        let f = GridField::from_fn(g, |x| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 });
        let q = sample_inverse_cdf(&f, &[0.0, 0.25, 0.5, 1.0]).unwrap();
        let h = g.spacing();
        assert!((q[0] - 0.0).abs() <= h);
        assert!((q[1] - 0.25).abs() <= h);
        assert!((q[2] - 0.5).abs() <= h);
        assert!((q[3] - 1.0).abs() <= h);
    }

    #[test]
    fn inverse_cdf_gaussian_median() {
        let g = Grid::new(10.0, 2000).unwrap();
        let f = GridField::from_fn(g, gaussian);
        let q = sample_inverse_cdf(&f, &[0.5]).unwrap();
        assert!(q[0].abs() <= g.spacing());
    }

    #[test]
    fn inverse_cdf_rejects_zero_mass() {
        let g = Grid::new(1.0, 4).unwrap();
        assert!(sample_inverse_cdf(&GridField::zeros(g), &[0.5]).is_err());
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64,
                               vals in proptest::collection::vec(-5.0..5.0f64, 8)) {
            let g = Grid::new(1.0, 8).unwrap();
            let v = GridField::new(g, vals.clone()).unwrap();
            let w = GridField::from_fn(g, |x| x * x);
            let combo = GridField::new(
                g,
                vals.iter().zip(w.values()).map(|(x, y)| a * x + b * y).collect(),
            )
            .unwrap();
            let lhs = integrate(&combo);
            let rhs = a * integrate(&v) + b * integrate(&w);
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn tv_triangle_inequality(v in proptest::collection::vec(-5.0..5.0f64, 8),
                                  w in proptest::collection::vec(-5.0..5.0f64, 8)) {
            let g = Grid::new(1.0, 8).unwrap();
            let fv = GridField::new(g, v.clone()).unwrap();
            let fw = GridField::new(g, w.clone()).unwrap();
            let sum = GridField::new(g, v.iter().zip(&w).map(|(a, b)| a + b).collect()).unwrap();
            prop_assert!(total_variation(&sum)
                         <= total_variation(&fv) + total_variation(&fw) + 1e-12);
        }

        #[test]
        fn inverse_cdf_round_trips_quantiles(q in 0.001..0.999f64) {
            let g = Grid::new(10.0, 500).unwrap();
            let f = GridField::from_fn(g, gaussian);
            let cdf = Cdf::new(&f).unwrap();
            let x = cdf.quantile(q);
            prop_assert!((cdf.eval(x) - q).abs() <= 1e-10);
        }

        #[test]
        fn quantiles_are_monotone(q1 in 0.0..1.0f64, q2 in 0.0..1.0f64) {
            let g = Grid::new(2.0, 64).unwrap();
            let f = GridField::from_fn(g, |x| if x.abs() < 1.0 { 1.0 - x.abs() } else { 0.0 });
            let cdf = Cdf::new(&f).unwrap();
            if q1 <= q2 {
                prop_assert!(cdf.quantile(q1) <= cdf.quantile(q2) + 1e-12);
            }
        }
    }
}
