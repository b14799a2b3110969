//! The transfer (Perron-Frobenius) operator with respect to Lebesgue, on
//! the interval and on the half-line: exact pointwise application,
//! grid-discretized application with precomputed branch data, cone
//! preservation, invariant-density estimation, and the head-flattening /
//! generalized-inverse utilities used in the decorrelation bound.
//!
//! `P g (y) = sum_j psi_j'(y) g(psi_j(y))`, tail-truncated per term for
//! countable branch families. Grid mode interpolates `g` monotonically
//! (piecewise linear), so discretization cannot fake cone violations.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::halfline::HalfLineMap;
use crate::map::{IntervalMap, TAIL_TERM_FLOOR};
use crate::measure::Space;

/// A system whose inverse branches drive a Lebesgue transfer operator.
pub trait TransferSystem: Send + Sync {
    /// `Some(N)` for finitely many branches, `None` for countable.
    fn branch_count(&self) -> Option<usize>;
    fn inverse(&self, j: usize, y: f64) -> Result<f64>;
    fn inverse_derivative(&self, j: usize, y: f64) -> Result<f64>;
    fn space(&self) -> Space;
}

impl TransferSystem for IntervalMap {
    fn branch_count(&self) -> Option<usize> {
        IntervalMap::branch_count(self)
    }

    fn inverse(&self, j: usize, y: f64) -> Result<f64> {
        self.inverse_branch(j, y)
    }

    fn inverse_derivative(&self, j: usize, y: f64) -> Result<f64> {
        self.inverse_branch_derivative(j, y)
    }

    fn space(&self) -> Space {
        Space::UnitInterval
    }
}

impl TransferSystem for HalfLineMap {
    fn branch_count(&self) -> Option<usize> {
        HalfLineMap::branch_count(self)
    }

    fn inverse(&self, j: usize, y: f64) -> Result<f64> {
        self.inverse_branch(j, y)
    }

    fn inverse_derivative(&self, j: usize, y: f64) -> Result<f64> {
        HalfLineMap::inverse_branch_derivative(self, j, y)
    }

    fn space(&self) -> Space {
        Space::HalfLine
    }
}

/// Upper bound on branches visited per point in countable systems.
const J_CAP: usize = 512;

/// One exact application of the operator to a callable, at a point.
pub fn transfer_apply_exact<S: TransferSystem + ?Sized>(
    sys: &S,
    g: &dyn Fn(f64) -> f64,
    y: f64,
) -> Result<f64> {
    let n = sys.branch_count();
    let mut acc = 0.0;
    let mut j = 0usize;
    loop {
        if let Some(n) = n {
            if j >= n {
                break;
            }
        } else if j >= J_CAP {
            break;
        }
        let w = sys.inverse_derivative(j, y)?;
        if n.is_none() && w < TAIL_TERM_FLOOR && j > 0 {
            break;
        }
        acc += w * g(sys.inverse(j, y)?);
        j += 1;
    }
    Ok(acc)
}

/// `P^n g (y)` evaluated exactly by recursion over branch words.
///
/// Cost grows like `N^n`; meant for small `n` where it serves as the
/// reference path for the grid-mode operator.
pub fn transfer_pow_exact<S: TransferSystem + ?Sized>(
    sys: &S,
    g: &dyn Fn(f64) -> f64,
    n: usize,
    y: f64,
) -> Result<f64> {
    if n == 0 {
        return Ok(g(y));
    }
    let count = sys.branch_count();
    let mut acc = 0.0;
    let mut j = 0usize;
    loop {
        if let Some(c) = count {
            if j >= c {
                break;
            }
        } else if j >= J_CAP {
            break;
        }
        let w = sys.inverse_derivative(j, y)?;
        if count.is_none() && w < TAIL_TERM_FLOOR && j > 0 {
            break;
        }
        if w != 0.0 {
            acc += w * transfer_pow_exact(sys, g, n - 1, sys.inverse(j, y)?)?;
        }
        j += 1;
    }
    Ok(acc)
}

#[derive(Clone, Copy)]
struct Term {
    weight: f64,
    /// Left grid index for interpolation; u32::MAX marks a point beyond
    /// the grid (value truncated to 0, weight booked as slack).
    idx: u32,
    frac: f64,
}

/// Grid-discretized transfer operator with precomputed branch images.
///
/// All root finding happens once, at construction; each application is a
/// weighted gather. Outputs are deterministic for a fixed grid regardless
/// of thread count (per-point sums run in fixed branch order).
pub struct GridOperator {
    grid: std::sync::Arc<Vec<f64>>,
    offsets: Vec<u32>,
    terms: Vec<Term>,
    space: Space,
    /// Largest inverse-derivative mass dropped past the grid end at any
    /// single point; multiply by a sup-bound on `g` for an L1 slack rate.
    pub truncation_slack: f64,
}

impl GridOperator {
    pub fn new<S: TransferSystem + ?Sized>(
        sys: &S,
        grid: std::sync::Arc<Vec<f64>>,
    ) -> Result<Self> {
        let n_points = grid.len();
        let count = sys.branch_count();
        let g_end = grid[n_points - 1];
        let g = grid.clone();
        let per_point: Vec<(Vec<Term>, f64)> = (0..n_points)
            .into_par_iter()
            .map(|i| {
                let y = g[i];
                let mut terms = Vec::new();
                let mut slack = 0.0;
                let mut j = 0usize;
                loop {
                    if let Some(c) = count {
                        if j >= c {
                            break;
                        }
                    } else if j >= J_CAP {
                        break;
                    }
                    let w = sys.inverse_derivative(j, y)?;
                    if count.is_none() && w < TAIL_TERM_FLOOR && j > 0 {
                        break;
                    }
                    let x = sys.inverse(j, y)?;
                    if x > g_end {
                        slack += w;
                    } else {
                        let k = g.partition_point(|&p| p < x);
                        let (idx, frac) = if k == 0 {
                            (0u32, 0.0)
                        } else if k >= n_points {
                            ((n_points - 2) as u32, 1.0)
                        } else {
                            let lo = g[k - 1];
                            let hi = g[k];
                            ((k - 1) as u32, (x - lo) / (hi - lo))
                        };
                        terms.push(Term {
                            weight: w,
                            idx,
                            frac,
                        });
                    }
                    j += 1;
                }
                Ok((terms, slack))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut offsets = Vec::with_capacity(n_points + 1);
        let mut terms = Vec::new();
        let mut slack: f64 = 0.0;
        offsets.push(0u32);
        for (t, s) in per_point {
            terms.extend_from_slice(&t);
            offsets.push(terms.len() as u32);
            slack = slack.max(s);
        }
        Ok(GridOperator {
            grid,
            offsets,
            terms,
            space: sys.space(),
            truncation_slack: slack,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// One application to sample values on the operator's grid.
    pub fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.grid.len());
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let lo = self.offsets[i] as usize;
                let hi = self.offsets[i + 1] as usize;
                let mut acc = 0.0;
                for t in &self.terms[lo..hi] {
                    let v = values[t.idx as usize] * (1.0 - t.frac)
                        + values[t.idx as usize + 1] * t.frac;
                    acc += t.weight * v;
                }
                acc
            })
            .collect()
    }

    pub fn apply(&self, g: &GridFunction) -> Result<GridFunction> {
        if g.grid().len() != self.grid.len() {
            return Err(Error::Config("grid mismatch in operator application".into()));
        }
        GridFunction::new(self.grid.clone(), self.apply_values(g.values()), self.space)
    }

    /// `P^n g` by repeated application.
    pub fn apply_pow(&self, g: &GridFunction, n: usize) -> Result<GridFunction> {
        let mut v = g.values().to_vec();
        for _ in 0..n {
            v = self.apply_values(&v);
        }
        GridFunction::new(self.grid.clone(), v, self.space)
    }
}

/// Piecewise description of the operator applied to an indicator
/// `1_{[0, a]}` on the half-line: tail sum from cell index `j` below the
/// breakpoint `b = T(a)`, tail from `j + 1` at and beyond it. The jump at
/// `b` has size `-psi_j'(b)`.
pub struct IndicatorImage<'m> {
    hmap: &'m HalfLineMap,
    pub cell: usize,
    pub breakpoint: f64,
}

/// Builds the indicator image description for `a > 0`.
pub fn indicator_image(hmap: &HalfLineMap, a: f64) -> Result<IndicatorImage<'_>> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a = {a} must be positive")));
    }
    let cell = hmap.locate(a)?;
    let breakpoint = hmap.eval(a)?;
    Ok(IndicatorImage {
        hmap,
        cell,
        breakpoint,
    })
}

impl IndicatorImage<'_> {
    pub fn eval(&self, y: f64) -> Result<f64> {
        let j = if y < self.breakpoint {
            self.cell
        } else {
            self.cell + 1
        };
        self.hmap.tail_derivative_sum(j, y)
    }

    /// Size of the downward jump at the breakpoint.
    pub fn jump(&self) -> Result<f64> {
        self.hmap
            .inverse_branch_derivative(self.cell, self.breakpoint)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    pub passed: bool,
    pub worst_violation: f64,
    /// Iterate and ordinate of the first violation, if any.
    pub first_violation: Option<(usize, f64)>,
}

/// Applies the grid operator `n` times to a decreasing `g`, checking that
/// every iterate stays decreasing within `tol`.
pub fn check_cone_preservation(
    op: &GridOperator,
    g: &GridFunction,
    n: usize,
    tol: f64,
) -> Result<ConeReport> {
    let mut worst: f64 = 0.0;
    let mut first = None;
    let mut cur = g.clone();
    for it in 1..=n {
        cur = op.apply(&cur)?;
        let w = cur.worst_increase();
        if w > worst {
            worst = w;
        }
        if w > tol && first.is_none() {
            let idx = cur
                .values()
                .windows(2)
                .position(|p| p[1] - p[0] > tol)
                .unwrap_or(0);
            first = Some((it, cur.grid()[idx]));
        }
    }
    Ok(ConeReport {
        passed: first.is_none(),
        worst_violation: worst,
        first_violation: first,
    })
}

#[derive(Clone, Debug)]
pub struct DensityEstimate {
    /// Estimated invariant density, normalized to unit mass on [1/2, 1].
    pub h: GridFunction,
    /// `x^p h(x)`; continuous and positive up to 0 in the limit.
    pub h_capital: GridFunction,
    /// Sup distance between consecutive `x^p h` iterates on [1e-4, 1].
    pub variation_trace: Vec<f64>,
    /// Set when the variation stopped decreasing over the last 10 steps.
    pub non_convergence: bool,
}

impl DensityEstimate {
    /// Extrapolated value of `x^p h(x)` at 0 with a crude error bar: the
    /// median and half-spread of the window `[x_lo, x_hi]`.
    pub fn head_value(&self, x_lo: f64, x_hi: f64) -> (f64, f64) {
        let (mn, mx) = self.h_capital.range_on(x_lo, x_hi);
        (0.5 * (mn + mx), 0.5 * (mx - mn))
    }
}

/// Iterates the interval-side Lebesgue transfer operator from `h = 1`,
/// renormalizing each iterate to unit mass on [1/2, 1].
///
/// The variation diagnostic is reported, not enforced: slow filling of
/// the singularity near 0 is expected behavior, not an error.
pub fn estimate_invariant_density(
    map: &IntervalMap,
    iters: usize,
    grid: std::sync::Arc<Vec<f64>>,
) -> Result<DensityEstimate> {
    let op = GridOperator::new(map, grid.clone())?;
    let p = map.p();
    let mut h = vec![1.0; grid.len()];
    let mut prev_capital: Option<Vec<f64>> = None;
    let mut variation_trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        h = op.apply_values(&h);
        let hf = GridFunction::new(grid.clone(), h, Space::UnitInterval)?;
        let mass = hf.integral_between(0.5, 1.0);
        if !(mass > 0.0) {
            return Err(Error::NonIntegrable(
                "renormalization window carries no mass".into(),
            ));
        }
        let mut hv = hf.values().to_vec();
        for v in &mut hv {
            *v /= mass;
        }
        let capital: Vec<f64> = grid
            .iter()
            .zip(&hv)
            .map(|(&x, &v)| x.powf(p) * v)
            .collect();
        if let Some(prev) = &prev_capital {
            let mut sup: f64 = 0.0;
            for ((&x, &c), &pc) in grid.iter().zip(&capital).zip(prev) {
                if x >= 1e-4 {
                    sup = sup.max((c - pc).abs());
                }
            }
            variation_trace.push(sup);
        }
        prev_capital = Some(capital);
        h = hv;
    }
    let h = GridFunction::new(grid.clone(), h, Space::UnitInterval)?;
    let h_capital = GridFunction::new(
        grid.clone(),
        prev_capital.expect("at least one iterate"),
        Space::UnitInterval,
    )?;
    let non_convergence = match variation_trace.len() {
        n if n >= 11 => variation_trace[n - 1] > variation_trace[n - 11],
        _ => false,
    };
    Ok(DensityEstimate {
        h,
        h_capital,
        variation_trace,
        non_convergence,
    })
}

/// Head-flattened copy of a decreasing function: pointwise min with the
/// value at `m`, hence constant on `[0, m]` and unchanged beyond. An `m`
/// past the grid end means no cap.
pub fn cap_head(g: &GridFunction, m: f64) -> GridFunction {
    let grid = g.grid();
    if m >= grid[grid.len() - 1] {
        return g.clone();
    }
    let cap = g.eval(m);
    let values = g.values().iter().map(|&v| v.min(cap)).collect();
    g.with_values(values).expect("same grid")
}

/// Generalized inverse of a decreasing grid function:
/// `inf { y : g(y) <= r }`, with the interpolant standing in for `g`.
///
/// Returns 0 when `r` is at or above the head value. When `r` is below
/// every sampled value the grid's right endpoint is returned with the
/// `truncated` flag set.
pub fn generalized_inverse(g: &GridFunction, r: f64) -> (f64, bool) {
    let v = g.values();
    let grid = g.grid();
    if r >= v[0] {
        return (0.0_f64.max(grid[0]), false);
    }
    let n = v.len();
    if r < v[n - 1] {
        return (grid[n - 1], true);
    }
    // First index with v[i] <= r.
    let mut lo = 0usize;
    let mut hi = n - 1;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if v[mid] <= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (v0, v1) = (v[lo], v[hi]);
    if v0 <= v1 {
        return (grid[hi], false);
    }
    let t = (v0 - r) / (v0 - v1);
    (grid[lo] + t * (grid[hi] - grid[lo]), false)
}

#[derive(Clone, Debug, Serialize)]
pub struct HeadBoundDiagnostic {
    /// `|int F gamma dleb|`.
    pub lhs: f64,
    /// `(eps/2) * ||gamma||_1` plus quadrature slack.
    pub bound: f64,
    /// Achieved `eps`: twice the sup of `|avg over [0,a]|` for `a >= m`.
    pub epsilon: f64,
    pub m: f64,
    pub holds: bool,
}

/// Decorrelation bound diagnostic: for a centered global `F` and the
/// head-flattened `gamma` (constant on `[0, m]`, decreasing), checks
/// `|int F gamma| <= (eps/2) ||gamma||_1` where `eps/2` bounds the
/// normalized head integrals of `F` from `m` on.
pub fn head_bound_diagnostic(
    f_glob: &crate::observable::Observable,
    gamma: &GridFunction,
    m: f64,
    probes: &[f64],
) -> Result<HeadBoundDiagnostic> {
    let mut eps_half: f64 = 0.0;
    for &a in probes {
        if a < m {
            continue;
        }
        let v = crate::quad::adaptive_with_cuts(
            &|y| f_glob.eval(y),
            0.0,
            a,
            &f_glob.breakpoints_in(0.0, a),
            crate::quad::QuadOptions::with_rel_tol(1e-10),
        )?;
        eps_half = eps_half.max((v / a).abs());
    }
    let lhs = gamma
        .integrate_against(|y| f_glob.eval(y), &f_glob.breakpoints_in(gamma.grid()[0], *gamma.grid().last().unwrap()))
        .abs();
    let bound = eps_half * gamma.l1_norm() + 1e-6;
    Ok(HeadBoundDiagnostic {
        lhs,
        bound,
        epsilon: 2.0 * eps_half,
        m,
        holds: lhs <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{halfline_grid, interval_grid};
    use crate::halfline::conjugate;
    use crate::map::BranchSpec;
    use std::sync::Arc;

    /// The full-shift fixture T(x) = 2x mod 1 (no indifferent point);
    /// Lebesgue is invariant, so P1 = 1 exactly.
    fn doubling_map() -> IntervalMap {
        let b = |lo: f64| {
            BranchSpec::new(
                lo,
                lo + 0.5,
                Arc::new(move |x: f64| 2.0 * (x - lo)),
                Arc::new(|_| 2.0),
                Arc::new(|_| 0.0),
            )
            .with_inverse(Arc::new(move |xi: f64| lo + xi / 2.0))
        };
        IntervalMap::custom(vec![b(0.0), b(0.5)], 1.0, 1.0, 0.25).unwrap()
    }

    #[test]
    fn doubling_preserves_one() {
        let map = doubling_map();
        for y in [0.1, 0.5, 0.9] {
            let v = transfer_apply_exact(&map, &|_| 1.0, y).unwrap();
            assert!((v - 1.0).abs() < 1e-15);
        }
        let v = transfer_pow_exact(&map, &|x| x, 3, 0.3).unwrap();
        // P^n x -> 1/2 for the full shift; n=3 already close.
        assert!((v - 0.5).abs() < 0.1, "got {v}");
    }

    #[test]
    fn grid_operator_matches_exact() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let grid = interval_grid(4000, 1e-8);
        let op = GridOperator::new(&map, grid.clone()).unwrap();
        let g = GridFunction::from_fn(grid.clone(), Space::UnitInterval, |x| 1.0 / (1.0 + x))
            .unwrap();
        let out = op.apply(&g).unwrap();
        for &y in &[0.11, 0.43, 0.77] {
            let exact = transfer_apply_exact(&map, &|x| 1.0 / (1.0 + x), y).unwrap();
            let got = out.eval(y);
            assert!((got - exact).abs() < 1e-5, "y={y}: {got} vs {exact}");
        }
    }

    #[test]
    fn indicator_image_structure() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let hmap = conjugate(&map).unwrap();
        let a = 0.6; // in cell 1 (= [0,1))
        let img = indicator_image(&hmap, a).unwrap();
        assert_eq!(img.cell, 1);
        let b = img.breakpoint;
        assert!((b - 2.0 * a / (1.0 - a)).abs() < 1e-12);
        // Non-increasing on each side, downward jump at b.
        let before = img.eval(b - 1e-9).unwrap();
        let after = img.eval(b + 1e-9).unwrap();
        assert!(after < before);
        let jump = img.jump().unwrap();
        assert!((before - after - jump).abs() < 1e-6);
        // Mass preservation: integral over [0, inf) equals a.
        let mass = crate::quad::adaptive_to_infinity(
            &|y| img.eval(y).unwrap(),
            0.0,
            1.0,
            crate::quad::QuadOptions::with_rel_tol(1e-9),
        )
        .unwrap();
        assert!((mass - a).abs() < 1e-7, "mass {mass} vs {a}");
        // Interior-to-branch-0 box: the y < b side is the full sum P1.
        let a0 = 2.5; // cell 0
        let img0 = indicator_image(&hmap, a0).unwrap();
        assert_eq!(img0.cell, 0);
        let y = 0.5;
        let full: f64 = (0..2)
            .map(|j| hmap.inverse_branch_derivative(j, y).unwrap())
            .sum();
        assert!((img0.eval(y).unwrap() - full).abs() < 1e-12);
    }

    #[test]
    fn cone_preservation_steps() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let hmap = conjugate(&map).unwrap();
        let grid = halfline_grid(6000, 1e-5, hmap.y_max());
        let op = GridOperator::new(&hmap, grid.clone()).unwrap();
        // 1_[0,a]/a as a grid function.
        let a = 1.7;
        let g = GridFunction::from_fn(grid.clone(), Space::HalfLine, |y| {
            if y <= a {
                1.0 / a
            } else {
                0.0
            }
        })
        .unwrap();
        let rep = check_cone_preservation(&op, &g, 5, 1e-8).unwrap();
        assert!(rep.passed, "{rep:?}");
        // n = 0 trivially passes.
        let rep0 = check_cone_preservation(&op, &g, 0, 1e-8).unwrap();
        assert!(rep0.passed);
        // Adversarial increasing input: the checker reports violations
        // without erroring.
        let bad = GridFunction::from_fn(grid.clone(), Space::HalfLine, |y| {
            if y <= 5.0 {
                y / 5.0
            } else {
                0.0
            }
        })
        .unwrap();
        let rep_bad = check_cone_preservation(&op, &bad, 1, 1e-8).unwrap();
        assert!(rep_bad.worst_violation > 0.0);
    }

    #[test]
    fn doubling_density_converges_to_one() {
        let map = doubling_map();
        let grid = interval_grid(2000, 1e-6);
        let est = estimate_invariant_density(&map, 30, grid).unwrap();
        let (mn, mx) = est.h.range_on(1e-4, 1.0);
        assert!((mn - 2.0).abs() < 1e-6 && (mx - 2.0).abs() < 1e-6, "h in [{mn}, {mx}]");
        // h normalized on [1/2,1]: h = 2 there; H = x^p h.
        let (hmn, _) = est.h_capital.range_on(1e-4, 1.0);
        assert!(hmn > 0.0);
        assert!(!est.non_convergence);
    }

    #[test]
    fn cap_head_and_generalized_inverse() {
        let grid = Arc::new(vec![0.0, 1.0, 2.0, 3.0, 10.0]);
        let g = GridFunction::new(
            grid.clone(),
            vec![4.0, 3.0, 2.0, 1.0, 0.0],
            Space::HalfLine,
        )
        .unwrap();
        let gamma = cap_head(&g, 2.0);
        assert_eq!(gamma.values()[0], 2.0);
        assert_eq!(gamma.values()[1], 2.0);
        assert_eq!(gamma.values()[2], 2.0);
        assert_eq!(gamma.values()[3], 1.0);
        assert!(gamma.l1_norm() <= g.l1_norm());
        // m beyond the grid: unchanged. m = 0: unchanged (head value is
        // the max of a decreasing function).
        assert_eq!(cap_head(&g, 100.0).values(), g.values());
        assert_eq!(cap_head(&g, 0.0).values(), g.values());

        // Generalized inverse conventions.
        let (y, t) = generalized_inverse(&gamma, 5.0);
        assert_eq!((y, t), (0.0, false));
        let (y, t) = generalized_inverse(&gamma, 1.5);
        assert!((y - 2.5).abs() < 1e-12 && !t);
        let (y, t) = generalized_inverse(&gamma, -0.5);
        assert_eq!((y, t), (10.0, true));
        // Step function 1_[0,2] sampled on a fine grid: inverse at 0.5
        // lands at 2 within grid resolution.
        let fine: Vec<f64> = (0..=4000).map(|i| i as f64 * 10.0 / 4000.0).collect();
        let step = GridFunction::from_fn(Arc::new(fine), Space::HalfLine, |y| {
            if y <= 2.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let (y, _) = generalized_inverse(&step, 0.5);
        assert!((y - 2.0).abs() < 0.01, "got {y}");
    }

    #[test]
    fn truncation_slack_is_small() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let hmap = conjugate(&map).unwrap();
        let grid = halfline_grid(2000, 1e-5, hmap.y_max());
        let op = GridOperator::new(&hmap, grid).unwrap();
        // Only ordinates within ~kappa of the grid end lose their
        // branch-0 term; the weight there is <= 1.
        assert!(op.truncation_slack <= 1.0 + 1e-12);
    }
}
