//! Multivalued maximal monotone graphs on the real line.
//!
//! A graph `beta` is stored as an ordered list of smooth increasing
//! branches ([`Piece`]) separated by filled discontinuities ([`Jump`]):
//! at a jump location `x` the value set is the closed interval
//! `[beta(x-), beta(x+)]`, so the graph is maximal monotone whenever the
//! pieces are increasing and consistently ordered. All solver kernels are
//! built from four scalar operations on this representation:
//!
//! - [`MonotoneGraph::value_interval`] — the (possibly degenerate)
//!   interval of values at a point;
//! - [`MonotoneGraph::minimal_section`] — the least-absolute-value
//!   selection `beta0`;
//! - [`MonotoneGraph::resolvent`] — the unique solution of
//!   `x + c*beta(x) -> r`, one scalar implicit step;
//! - [`MonotoneGraph::potential`] — the convex potential
//!   `j(x) = int_0^x beta0`.
//!
//! Built-in families: `linear` (`a*u`), `power` (`|u| u^(m-1)`, odd) and
//! `heaviside` (`u H(u - e_c)` completed by filling the jump at `e_c` and
//! extended oddly), plus piecewise-linear `table` graphs. The
//! [`MonotoneGraph::regularize`] transform adds `eps*id`, which makes any
//! graph strictly monotone and surjective.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, pow, sqrt};

use crate::{Error, Result};

/// Iteration cap for all scalar bisections.
const BISECT_MAX_ITER: usize = 60;
/// Absolute tolerance on the abscissa for scalar bisections.
const BISECT_TOL: f64 = 1e-12;

/// Serializable description of a graph; validated by [`build_graph`].
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    /// `beta(u) = a * u`, `a >= 0`.
    Linear { slope: f64 },
    /// `beta(u) = |u| u^(m-1)` (odd extension of `u^m`), `m >= 1`.
    Power { exponent: f64 },
    /// `beta(u) = u H(u - e_c)` with the jump at `e_c` filled and the
    /// whole graph extended oddly; `e_c >= 0` (zero gives the identity).
    Heaviside { threshold: f64 },
    /// Piecewise-linear graph through `(x, w)` breakpoints, non-decreasing
    /// in both coordinates; repeated `x` encodes a filled jump. Extended
    /// beyond the table with the terminal segment slopes.
    Table { points: Vec<(f64, f64)> },
}

/// One scalar branch formula; closed under `+ eps*id` and inversion
/// (inversion of a shifted power falls back to [`Branch::InverseOf`]).
#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    /// Constant value (a flat of the graph).
    Const(f64),
    /// `a*x + b`.
    Affine { a: f64, b: f64 },
    /// `k * sign(x) * |x|^p + a*x` with `k, p > 0`, `a >= 0`.
    PowLin { k: f64, p: f64, a: f64 },
    /// Numeric inverse of `of` restricted to `[lo, hi]`, plus `lin*x`.
    InverseOf { of: Box<Branch>, lo: f64, hi: f64, lin: f64 },
}

impl Branch {
    /// Branch value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Branch::Const(c) => *c,
            Branch::Affine { a, b } => a * x + b,
            Branch::PowLin { k, p, a } => k * signed_pow(x, *p) + a * x,
            Branch::InverseOf { of, lo, hi, lin } => invert_on(of, x, *lo, *hi) + lin * x,
        }
    }

    /// Branch derivative at `x` (one-sided at kinks, `0` where flat).
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Branch::Const(_) => 0.0,
            Branch::Affine { a, .. } => *a,
            Branch::PowLin { k, p, a } => {
                if *p == 1.0 {
                    k + a
                } else {
                    k * p * pow(fabs(x), p - 1.0) + a
                }
            }
            Branch::InverseOf { of, lo, hi, lin } => {
                let t = invert_on(of, x, *lo, *hi);
                let d = of.deriv(t);
                if d > 0.0 {
                    1.0 / d + lin
                } else {
                    *lin
                }
            }
        }
    }

    /// Antiderivative difference `int_{x0}^{x1}` of the branch.
    fn integral(&self, x0: f64, x1: f64) -> f64 {
        match self {
            Branch::Const(c) => c * (x1 - x0),
            Branch::Affine { a, b } => 0.5 * a * (x1 * x1 - x0 * x0) + b * (x1 - x0),
            Branch::PowLin { k, p, a } => {
                // primitive of k sign(x)|x|^p is k |x|^(p+1)/(p+1)
                let prim = |x: f64| k * pow(fabs(x), p + 1.0) / (p + 1.0) + 0.5 * a * x * x;
                prim(x1) - prim(x0)
            }
            Branch::InverseOf { .. } => simpson(|x| self.eval(x), x0, x1, 256),
        }
    }

    /// Shift the branch by `eps * id`.
    fn plus_linear(&self, eps: f64) -> Branch {
        match self {
            Branch::Const(c) => Branch::Affine { a: eps, b: *c },
            Branch::Affine { a, b } => Branch::Affine { a: a + eps, b: *b },
            Branch::PowLin { k, p, a } => Branch::PowLin { k: *k, p: *p, a: a + eps },
            Branch::InverseOf { of, lo, hi, lin } => Branch::InverseOf {
                of: of.clone(),
                lo: *lo,
                hi: *hi,
                lin: lin + eps,
            },
        }
    }

    /// Inverse function of a strictly increasing branch on `[lo, hi]`.
    fn inverse(&self, lo: f64, hi: f64) -> Branch {
        match self {
            Branch::Affine { a, b } if *a > 0.0 => Branch::Affine { a: 1.0 / a, b: -b / a },
            Branch::PowLin { k, p, a } if *a == 0.0 => Branch::PowLin {
                k: pow(*k, -1.0 / p),
                p: 1.0 / p,
                a: 0.0,
            },
            Branch::InverseOf { of, lin, .. } if *lin == 0.0 => (**of).clone(),
            other => Branch::InverseOf { of: Box::new(other.clone()), lo, hi, lin: 0.0 },
        }
    }
}

/// Odd power `sign(x) |x|^p`.
fn signed_pow(x: f64, p: f64) -> f64 {
    if x >= 0.0 {
        pow(x, p)
    } else {
        -pow(-x, p)
    }
}

/// Monotone bisection for `of(t) = y`, `t in [lo, hi]`.
fn invert_on(of: &Branch, y: f64, lo: f64, hi: f64) -> f64 {
    let big = 1e18;
    let mut a = lo.max(-big);
    let mut b = hi.min(big);
    if of.eval(a) >= y {
        return a;
    }
    if of.eval(b) <= y {
        return b;
    }
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (a + b);
        if of.eval(mid) < y {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= BISECT_TOL {
            break;
        }
    }
    0.5 * (a + b)
}

/// Composite Simpson rule with `n` panels (`n` even).
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(2) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// A smooth increasing branch on the (possibly unbounded) interval
/// `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub branch: Branch,
}

/// A filled discontinuity: value set `[w_lo, w_hi]` at `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub at: f64,
    pub w_lo: f64,
    pub w_hi: f64,
}

/// Tag enabling closed-form resolvents for the built-in families; the
/// `eps` component tracks accumulated `regularize` shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
enum FastKind {
    Linear { a: f64 },
    Heaviside { ec: f64, eps: f64 },
    Power { m: f64, eps: f64 },
    Generic,
}

/// A maximal monotone, possibly multivalued graph with `0 in beta(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneGraph {
    pieces: Vec<Piece>,
    jumps: Vec<Jump>,
    growth_constant: f64,
    /// `|x|` range on which the growth constant was computed.
    range_bound: f64,
    fast: FastKind,
}

/// Default validation range for the linear-growth constant.
const DEFAULT_RANGE: f64 = 10.0;

/// Validate a [`GraphSpec`] and construct the corresponding graph.
pub fn build_graph(spec: &GraphSpec) -> Result<MonotoneGraph> {
    match spec {
        GraphSpec::Linear { slope } => {
            if !slope.is_finite() || *slope < 0.0 {
                return Err(Error::InvalidGraph(format!("linear slope must be >= 0, got {slope}")));
            }
            Ok(MonotoneGraph::from_parts(
                vec![Piece {
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                    branch: Branch::Affine { a: *slope, b: 0.0 },
                }],
                vec![],
                FastKind::Linear { a: *slope },
            ))
        }
        GraphSpec::Power { exponent } => {
            if !exponent.is_finite() || *exponent < 1.0 {
                return Err(Error::InvalidGraph(format!(
                    "power exponent must be >= 1, got {exponent}"
                )));
            }
            Ok(MonotoneGraph::from_parts(
                vec![Piece {
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                    branch: Branch::PowLin { k: 1.0, p: *exponent, a: 0.0 },
                }],
                vec![],
                FastKind::Power { m: *exponent, eps: 0.0 },
            ))
        }
        GraphSpec::Heaviside { threshold } => {
            let ec = *threshold;
            if !ec.is_finite() || ec < 0.0 {
                return Err(Error::InvalidGraph(format!("threshold must be >= 0, got {ec}")));
            }
            if ec == 0.0 {
                // H(u - 0) fills to the identity on u >= 0; the odd
                // extension is then the identity everywhere.
                return build_graph(&GraphSpec::Linear { slope: 1.0 });
            }
            let id = Branch::Affine { a: 1.0, b: 0.0 };
            Ok(MonotoneGraph::from_parts(
                vec![
                    Piece { lo: f64::NEG_INFINITY, hi: -ec, branch: id.clone() },
                    Piece { lo: -ec, hi: ec, branch: Branch::Const(0.0) },
                    Piece { lo: ec, hi: f64::INFINITY, branch: id },
                ],
                vec![
                    Jump { at: -ec, w_lo: -ec, w_hi: 0.0 },
                    Jump { at: ec, w_lo: 0.0, w_hi: ec },
                ],
                FastKind::Heaviside { ec, eps: 0.0 },
            ))
        }
        GraphSpec::Table { points } => build_table(points),
    }
}

fn build_table(points: &[(f64, f64)]) -> Result<MonotoneGraph> {
    if points.len() < 2 {
        return Err(Error::InvalidGraph("table needs at least two breakpoints".into()));
    }
    for w in points.windows(2) {
        let ((x0, w0), (x1, w1)) = (w[0], w[1]);
        if !(x0.is_finite() && w0.is_finite() && x1.is_finite() && w1.is_finite()) {
            return Err(Error::InvalidGraph("table entries must be finite".into()));
        }
        if x1 < x0 || w1 < w0 {
            return Err(Error::InvalidGraph(format!(
                "table must be non-decreasing, got ({x0},{w0}) then ({x1},{w1})"
            )));
        }
    }
    let mut pieces = Vec::new();
    let mut jumps = Vec::new();
    // Slope used to extend past each end of the table.
    let end_slope = |iter: &mut dyn Iterator<Item = (&(f64, f64), &(f64, f64))>| -> f64 {
        for (p0, p1) in iter {
            if p1.0 > p0.0 {
                return (p1.1 - p0.1) / (p1.0 - p0.0);
            }
        }
        0.0
    };
    let left_slope = end_slope(&mut points.iter().zip(points.iter().skip(1)));
    let right_slope = end_slope(&mut points.iter().rev().skip(1).zip(points.iter().rev()));

    let first = points[0];
    let last = *points.last().unwrap();
    pieces.push(Piece {
        lo: f64::NEG_INFINITY,
        hi: first.0,
        branch: Branch::Affine { a: left_slope, b: first.1 - left_slope * first.0 },
    });
    for w in points.windows(2) {
        let ((x0, w0), (x1, w1)) = (w[0], w[1]);
        if x1 > x0 {
            let a = (w1 - w0) / (x1 - x0);
            // anchor at the endpoint closest to zero so segments through
            // the origin stay exactly homogeneous
            let b = if fabs(x0) <= fabs(x1) { w0 - a * x0 } else { w1 - a * x1 };
            pieces.push(Piece { lo: x0, hi: x1, branch: Branch::Affine { a, b } });
        } else if w1 > w0 {
            jumps.push(Jump { at: x0, w_lo: w0, w_hi: w1 });
        }
    }
    pieces.push(Piece {
        lo: last.0,
        hi: f64::INFINITY,
        branch: Branch::Affine { a: right_slope, b: last.1 - right_slope * last.0 },
    });
    // Merge duplicate jumps at the same abscissa (repeated x more than twice).
    jumps.dedup_by(|b, a| {
        if a.at == b.at {
            a.w_hi = a.w_hi.max(b.w_hi);
            a.w_lo = a.w_lo.min(b.w_lo);
            true
        } else {
            false
        }
    });
    let g = MonotoneGraph::from_parts(pieces, jumps, FastKind::Generic);
    let (lo0, hi0) = g.value_interval(0.0);
    if lo0 > 0.0 || hi0 < 0.0 {
        return Err(Error::InvalidGraph("graph must contain the origin: 0 in beta(0)".into()));
    }
    if !g.growth_constant.is_finite() {
        return Err(Error::InvalidGraph(
            "graph violates linear growth |w| <= c|x| (nonzero value set at 0?)".into(),
        ));
    }
    Ok(g)
}

impl MonotoneGraph {
    fn from_parts(pieces: Vec<Piece>, jumps: Vec<Jump>, fast: FastKind) -> Self {
        let mut g = MonotoneGraph {
            pieces,
            jumps,
            growth_constant: 0.0,
            range_bound: DEFAULT_RANGE,
            fast,
        };
        g.growth_constant = g.growth_constant_on(g.range_bound);
        g
    }

    /// The ordered branch list.
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// The filled discontinuities.
    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Linear-growth constant `c` with `|w| <= c |x|` for every selection
    /// with `|x| <=` [`MonotoneGraph::range_bound`].
    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    /// `|x|` range on which [`MonotoneGraph::growth_constant`] is valid.
    pub fn range_bound(&self) -> f64 {
        self.range_bound
    }

    /// Smallest `c` with `|w| <= c|x|` for all selections with `|x| <= r`.
    ///
    /// Infinite for graphs with a nonzero value set at the origin or with
    /// an unbounded ratio near zero (e.g. root-type inverse graphs).
    pub fn growth_constant_on(&self, r: f64) -> f64 {
        let mut c: f64 = 0.0;
        for j in &self.jumps {
            if fabs(j.at) <= r {
                let top = fabs(j.w_lo).max(fabs(j.w_hi));
                if j.at == 0.0 {
                    if top > 0.0 {
                        return f64::INFINITY;
                    }
                } else {
                    c = c.max(top / fabs(j.at));
                }
            }
        }
        for p in &self.pieces {
            let lo = p.lo.max(-r);
            let hi = p.hi.min(r);
            if lo >= hi {
                continue;
            }
            match &p.branch {
                Branch::Const(v) => {
                    // ratio maximal at the endpoint closest to zero
                    let xmin = if lo > 0.0 {
                        lo
                    } else if hi < 0.0 {
                        -hi
                    } else {
                        0.0
                    };
                    if *v != 0.0 {
                        if xmin == 0.0 {
                            return f64::INFINITY;
                        }
                        c = c.max(fabs(*v) / xmin);
                    }
                }
                Branch::Affine { a, b } => {
                    if *b == 0.0 {
                        c = c.max(fabs(*a));
                    } else {
                        for x in [lo, hi] {
                            if x == 0.0 {
                                return f64::INFINITY;
                            }
                            c = c.max(fabs(a * x + b) / fabs(x));
                        }
                        if lo < 0.0 && hi > 0.0 {
                            return f64::INFINITY;
                        }
                    }
                }
                Branch::PowLin { k, p: q, a } => {
                    // |w|/|x| = k|x|^(q-1) + a, monotone in |x|
                    let xm = fabs(lo).max(fabs(hi));
                    let x0 = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { fabs(lo).min(fabs(hi)) };
                    for x in [x0, xm] {
                        if x == 0.0 {
                            if *q < 1.0 && *k > 0.0 {
                                return f64::INFINITY;
                            }
                            continue;
                        }
                        c = c.max(k * pow(x, q - 1.0) + a);
                    }
                }
                Branch::InverseOf { .. } => {
                    // no closed form; sample the ratio
                    for i in 0..=32 {
                        let x = lo + (hi - lo) * i as f64 / 32.0;
                        if x != 0.0 {
                            let v = p.branch.eval(x);
                            c = c.max(fabs(v) / fabs(x));
                        } else if fabs(p.branch.eval(0.0)) > 1e-300 {
                            return f64::INFINITY;
                        }
                    }
                }
            }
        }
        c
    }

    /// `[inf beta(x), sup beta(x)]`; degenerate at continuity points.
    pub fn value_interval(&self, x: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.pieces {
            if p.lo <= x && x <= p.hi {
                let v = p.branch.eval(x);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        for j in &self.jumps {
            if j.at == x {
                lo = lo.min(j.w_lo);
                hi = hi.max(j.w_hi);
            }
        }
        debug_assert!(lo <= hi, "point {x} not covered by any piece");
        (lo, hi)
    }

    /// Minimal section `beta0(x)`: the element of `beta(x)` of least
    /// absolute value.
    pub fn minimal_section(&self, x: f64) -> f64 {
        let (lo, hi) = self.value_interval(x);
        if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            hi
        } else {
            0.0
        }
    }

    /// Convex potential `j(x) = int_0^x beta0(y) dy`.
    ///
    /// Closed form for the built-in branch formulas; numeric quadrature
    /// only for branches produced by graph inversion.
    pub fn potential(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let (a, b, sign) = if x > 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
        let mut acc = 0.0;
        for p in &self.pieces {
            let lo = p.lo.max(a);
            let hi = p.hi.min(b);
            if lo < hi {
                acc += p.branch.integral(lo, hi);
            }
        }
        sign * acc
    }

    /// Non-negative diffusivity section `sqrt(beta0(x)/x)` for `x > 0`,
    /// zero for `x <= 0`; bounded by the square root of the growth
    /// constant.
    pub fn phi_section(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let w = self.minimal_section(x);
        if w <= 0.0 {
            0.0
        } else {
            sqrt(w / x)
        }
    }

    /// Solve the scalar inclusion `x + c*beta(x) -> r` for `c > 0`.
    ///
    /// Returns `(x, w)` with `w = (r - x)/c in beta(x)`; `x` is unique
    /// because `x + c*beta(x)` is strictly increasing and surjective.
    /// Closed forms handle the built-in families (including their
    /// regularized shifts); everything else runs a guarded bisection with
    /// a jump-interval membership test.
    pub fn resolvent(&self, c: f64, r: f64) -> Result<(f64, f64)> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("resolvent weight must be > 0, got {c}")));
        }
        let x = match self.fast {
            FastKind::Linear { a } => r / (1.0 + c * a),
            FastKind::Heaviside { ec, eps } => {
                let (c_eff, r_eff) = reduce_shift(c, r, eps);
                heaviside_resolvent(ec, c_eff, r_eff)
            }
            FastKind::Power { m, eps } => {
                let (c_eff, r_eff) = reduce_shift(c, r, eps);
                power_resolvent(m, c_eff, r_eff)
            }
            FastKind::Generic => self.bisect_resolvent(c, r)?,
        };
        Ok((x, (r - x) / c))
    }

    /// Generic resolvent: bisection on `x + c*beta(x)` over the bracket
    /// `[min(0,r), max(0,r)]`, which always contains the solution since
    /// `0 in beta(0)` and the map is increasing.
    fn bisect_resolvent(&self, c: f64, r: f64) -> Result<f64> {
        let mut lo = r.min(0.0);
        let mut hi = r.max(0.0);
        let below = |x: f64| x + c * self.value_interval(x).1 < r;
        let above = |x: f64| x + c * self.value_interval(x).0 > r;
        if below(hi) || above(lo) {
            return Err(Error::InvariantViolation(format!(
                "resolvent bracket failure at c={c}, r={r}; graph is not maximal monotone"
            )));
        }
        for _ in 0..BISECT_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if below(mid) {
                lo = mid;
            } else if above(mid) {
                hi = mid;
            } else {
                // r lands in the filled interval at mid
                return Ok(mid);
            }
            if hi - lo <= BISECT_TOL {
                break;
            }
        }
        // If the bracket collapsed next to a filled jump whose shifted
        // interval contains r, the jump abscissa is the exact solution.
        for j in &self.jumps {
            if j.at >= lo - BISECT_TOL
                && j.at <= hi + BISECT_TOL
                && r >= j.at + c * j.w_lo - BISECT_TOL
                && r <= j.at + c * j.w_hi + BISECT_TOL
            {
                return Ok(j.at);
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The graph `beta + eps*id`: strictly monotone, non-degenerate and
    /// surjective; the growth constant grows by `eps`.
    pub fn regularize(&self, eps: f64) -> Result<MonotoneGraph> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization must be > 0, got {eps}"
            )));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece { lo: p.lo, hi: p.hi, branch: p.branch.plus_linear(eps) })
            .collect();
        let jumps = self
            .jumps
            .iter()
            .map(|j| Jump { at: j.at, w_lo: j.w_lo + eps * j.at, w_hi: j.w_hi + eps * j.at })
            .collect();
        let fast = match self.fast {
            FastKind::Linear { a } => FastKind::Linear { a: a + eps },
            FastKind::Heaviside { ec, eps: e0 } => FastKind::Heaviside { ec, eps: e0 + eps },
            FastKind::Power { m, eps: e0 } => FastKind::Power { m, eps: e0 + eps },
            FastKind::Generic => FastKind::Generic,
        };
        Ok(MonotoneGraph::from_parts(pieces, jumps, fast))
    }

    /// The inverse graph: flats become jumps and jumps become flats.
    ///
    /// The result is maximal monotone but need not satisfy linear growth
    /// (its growth constant may be infinite); it supports the same kernel
    /// operations, with the resolvent falling back to bisection.
    pub fn inverse_graph(&self) -> MonotoneGraph {
        let mut pieces = Vec::new();
        let mut jumps = Vec::new();
        for j in &self.jumps {
            if j.w_hi > j.w_lo {
                pieces.push(Piece { lo: j.w_lo, hi: j.w_hi, branch: Branch::Const(j.at) });
            }
        }
        for p in &self.pieces {
            match &p.branch {
                Branch::Const(v) => {
                    if p.hi > p.lo {
                        jumps.push(Jump { at: *v, w_lo: p.lo, w_hi: p.hi });
                    }
                }
                b => {
                    let (vlo, vhi) = (branch_limit(b, p.lo), branch_limit(b, p.hi));
                    if vhi > vlo {
                        pieces.push(Piece { lo: vlo, hi: vhi, branch: b.inverse(p.lo, p.hi) });
                    } else if p.hi > p.lo {
                        // zero-slope affine degenerates to a flat
                        jumps.push(Jump { at: vlo, w_lo: p.lo, w_hi: p.hi });
                    }
                }
            }
        }
        pieces.sort_unstable_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        jumps.sort_unstable_by(|a, b| a.at.partial_cmp(&b.at).unwrap());
        MonotoneGraph::from_parts(pieces, jumps, FastKind::Generic)
    }
}

fn branch_limit(b: &Branch, x: f64) -> f64 {
    if x.is_finite() {
        b.eval(x)
    } else if x > 0.0 {
        match b {
            Branch::Const(c) => *c,
            Branch::Affine { a, b } => {
                if *a > 0.0 {
                    f64::INFINITY
                } else {
                    *b
                }
            }
            _ => f64::INFINITY,
        }
    } else {
        match b {
            Branch::Const(c) => *c,
            Branch::Affine { a, b } => {
                if *a > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    *b
                }
            }
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Rewrite `x + c(beta0(x) + eps x) -> r` as `x + c' beta0(x) -> r'`.
fn reduce_shift(c: f64, r: f64, eps: f64) -> (f64, f64) {
    if eps == 0.0 {
        (c, r)
    } else {
        let s = 1.0 + c * eps;
        (c / s, r / s)
    }
}

/// Closed-form resolvent for the odd-extended filled Heaviside graph.
fn heaviside_resolvent(ec: f64, c: f64, r: f64) -> f64 {
    let t = fabs(r);
    let x = if t <= ec {
        t
    } else if t <= ec * (1.0 + c) {
        // lands inside the filled jump
        ec
    } else {
        t / (1.0 + c)
    };
    if r >= 0.0 {
        x
    } else {
        -x
    }
}

/// Resolvent for `beta(x) = sign(x)|x|^m`: Newton with bisection fallback
/// on `s + c s^m = |r|`, reduced to `s >= 0` by oddness.
fn power_resolvent(m: f64, c: f64, r: f64) -> f64 {
    let t = fabs(r);
    if t == 0.0 {
        return 0.0;
    }
    let s = if m == 2.0 {
        // stable root of c s^2 + s - t = 0
        2.0 * t / (1.0 + sqrt(1.0 + 4.0 * c * t))
    } else if m == 1.0 {
        t / (1.0 + c)
    } else {
        let (mut lo, mut hi) = (0.0_f64, t);
        let mut s = t / (1.0 + c * pow(t, m - 1.0));
        for _ in 0..BISECT_MAX_ITER {
            let f = s + c * pow(s, m) - t;
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let df = 1.0 + c * m * pow(s, m - 1.0);
            let mut next = s - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if fabs(next - s) <= BISECT_TOL {
                s = next;
                break;
            }
            s = next;
        }
        s
    };
    if r >= 0.0 {
        s
    } else {
        -s
    }
}
