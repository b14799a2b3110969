//! Functions sampled on strictly increasing grids, with the monotone
//! piecewise-linear interpolation used throughout the transfer-operator
//! code. Grids are geometric near the singular end of the space.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::Space;

#[derive(Clone)]
pub struct GridFunction {
    grid: Arc<Vec<f64>>,
    values: Vec<f64>,
    space: Space,
}

impl GridFunction {
    pub fn new(grid: Arc<Vec<f64>>, values: Vec<f64>, space: Space) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Config(format!(
                "grid/value length mismatch: {} vs {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::Config("grid needs at least two points".into()));
        }
        for w in grid.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config(format!(
                    "grid not strictly increasing near {}",
                    w[0]
                )));
            }
        }
        Ok(GridFunction {
            grid,
            values,
            space,
        })
    }

    pub fn from_fn(grid: Arc<Vec<f64>>, space: Space, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values, space)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<Vec<f64>> {
        self.grid.clone()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Replaces the sample values, keeping grid and space.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), values, self.space)
    }

    /// Piecewise-linear evaluation, constant beyond the grid ends.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return self.values[0];
        }
        if x >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let i = g.partition_point(|&p| p < x);
        let (x0, x1) = (g[i - 1], g[i]);
        let t = (x - x0) / (x1 - x0);
        self.values[i - 1] * (1.0 - t) + self.values[i] * t
    }

    /// Trapezoid L1 norm of |values| over the grid span.
    pub fn l1_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.grid.len() {
            let dx = self.grid[i] - self.grid[i - 1];
            acc += 0.5 * dx * (self.values[i - 1].abs() + self.values[i].abs());
        }
        acc
    }

    /// Trapezoid integral of the interpolant over `[a, b]` (clipped to
    /// the grid span), with interpolated boundary values.
    pub fn integral_between(&self, a: f64, b: f64) -> f64 {
        let g = &self.grid;
        let lo = a.max(g[0]);
        let hi = b.min(g[g.len() - 1]);
        if !(lo < hi) {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut x_prev = lo;
        let mut v_prev = self.eval(lo);
        let start = g.partition_point(|&p| p <= lo);
        for i in start..g.len() {
            let x = g[i].min(hi);
            let v = if x == g[i] { self.values[i] } else { self.eval(x) };
            acc += 0.5 * (x - x_prev) * (v_prev + v);
            x_prev = x;
            v_prev = v;
            if g[i] >= hi {
                break;
            }
        }
        acc
    }

    /// Integral of `f(x) * self(x)` over the grid span. Each cell uses
    /// Simpson on the product (the interpolant is linear per cell, so the
    /// only approximation is in `f`). `cuts` forces cell splits at known
    /// discontinuities of `f`.
    pub fn integrate_against(&self, f: impl Fn(f64) -> f64, cuts: &[f64]) -> f64 {
        let g = &self.grid;
        let mut cuts: Vec<f64> = cuts
            .iter()
            .copied()
            .filter(|c| *c > g[0] && *c < g[g.len() - 1])
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut ci = 0usize;
        let mut acc = 0.0;
        for i in 1..g.len() {
            let mut x0 = g[i - 1];
            let x1 = g[i];
            while ci < cuts.len() && cuts[ci] <= x1 {
                let c = cuts[ci];
                if c > x0 {
                    acc += self.simpson_cell(&f, x0, c);
                    x0 = c;
                }
                ci += 1;
            }
            acc += self.simpson_cell(&f, x0, x1);
        }
        acc
    }

    fn simpson_cell(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        let m = 0.5 * (a + b);
        let fa = f(a) * self.eval(a);
        let fm = f(m) * self.eval(m);
        let fb = f(b) * self.eval(b);
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    /// True when consecutive values never increase by more than `tol`.
    pub fn is_decreasing(&self, tol: f64) -> bool {
        self.worst_increase() <= tol
    }

    /// Largest increase between consecutive samples (0 for monotone data).
    pub fn worst_increase(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.values.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
        worst
    }

    /// Sup-norm distance to another function on the same grid, restricted
    /// to grid points in `[lo, hi]`.
    pub fn sup_diff_on(&self, other: &GridFunction, lo: f64, hi: f64) -> f64 {
        debug_assert_eq!(self.grid.len(), other.grid.len());
        let mut worst: f64 = 0.0;
        for (i, &x) in self.grid.iter().enumerate() {
            if x >= lo && x <= hi {
                worst = worst.max((self.values[i] - other.values[i]).abs());
            }
        }
        worst
    }

    /// (min, max) of the values at grid points in `[lo, hi]`.
    pub fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut mn = f64::INFINITY;
        let mut mx = f64::NEG_INFINITY;
        for (i, &x) in self.grid.iter().enumerate() {
            if x >= lo && x <= hi {
                mn = mn.min(self.values[i]);
                mx = mx.max(self.values[i]);
            }
        }
        (mn, mx)
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// CSV with header `y,value`, one row per grid point.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "y,value")?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }
}

impl std::fmt::Debug for GridFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFunction")
            .field("space", &self.space)
            .field("points", &self.grid.len())
            .field("span", &(self.grid[0], self.grid[self.grid.len() - 1]))
            .finish()
    }
}

/// Geometric grid from `lo` to `hi` (inclusive), `n >= 2` points.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let ratio = (hi / lo).ln();
    let mut g: Vec<f64> = (0..n)
        .map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    g[n - 1] = hi;
    g
}

/// Grid for (0, 1]: geometric from `x_min` up to 1, dense near 0.
pub fn interval_grid(n: usize, x_min: f64) -> Arc<Vec<f64>> {
    Arc::new(geometric_grid(x_min, 1.0, n))
}

/// Grid for the half-line: `{0}` followed by a geometric run from
/// `y_lo` to `y_max`, dense (in relative terms) everywhere.
pub fn halfline_grid(n: usize, y_lo: f64, y_max: f64) -> Arc<Vec<f64>> {
    let mut g = Vec::with_capacity(n);
    g.push(0.0);
    g.extend(geometric_grid(y_lo, y_max, n - 1));
    Arc::new(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_and_between() {
        let grid = Arc::new(vec![0.0, 1.0, 2.0, 4.0]);
        let gf = GridFunction::new(grid, vec![2.0, 2.0, 2.0, 2.0], Space::HalfLine).unwrap();
        assert!((gf.l1_norm() - 8.0).abs() < 1e-15);
        assert!((gf.integral_between(0.5, 3.0) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn eval_interpolates_and_extends() {
        let grid = Arc::new(vec![1.0, 2.0, 3.0]);
        let gf = GridFunction::new(grid, vec![10.0, 20.0, 10.0], Space::UnitInterval).unwrap();
        assert_eq!(gf.eval(0.5), 10.0);
        assert_eq!(gf.eval(3.5), 10.0);
        assert!((gf.eval(1.5) - 15.0).abs() < 1e-14);
    }

    #[test]
    fn monotonicity_probe() {
        let grid = Arc::new(vec![0.0, 1.0, 2.0]);
        let dec = GridFunction::new(grid.clone(), vec![3.0, 2.0, 1.0], Space::HalfLine).unwrap();
        assert!(dec.is_decreasing(0.0));
        let wobble = GridFunction::new(grid, vec![3.0, 2.0, 2.5], Space::HalfLine).unwrap();
        assert!(!wobble.is_decreasing(1e-9));
        assert!((wobble.worst_increase() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrate_against_product() {
        // int_0^2 x * (linear hat) dx with hat = x on [0,1], 2-x on [1,2].
        let grid = Arc::new(vec![0.0, 1.0, 2.0]);
        let gf = GridFunction::new(grid, vec![0.0, 1.0, 0.0], Space::HalfLine).unwrap();
        let v = gf.integrate_against(|x| x, &[]);
        // int_0^1 x^2 + int_1^2 x(2-x) = 1/3 + (x^2 - x^3/3)|_1^2 = 1/3 + 2/3 = 1.
        assert!((v - 1.0).abs() < 1e-14, "got {v}");
    }

    #[test]
    fn grids_are_strict() {
        let g = geometric_grid(1e-8, 1.0, 1000);
        assert_eq!(g.len(), 1000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.last().unwrap(), 1.0);
        let h = halfline_grid(1000, 1e-6, 1e12);
        assert_eq!(h[0], 0.0);
        assert!(h.windows(2).all(|w| w[0] < w[1]));
    }
}
