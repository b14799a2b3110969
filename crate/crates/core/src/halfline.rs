//! Conjugation between (0,1] and the half-line, and the conjugated maps.
//!
//! The isomorphism `y = (x^{-p} - 1)/p` carries the interval with the
//! `x^{-p-1}` measure to the half-line with Lebesgue measure, sending the
//! indifferent fixed point at 0 to a "fixed point at infinity". Interval
//! branch `j` over `(a_j, a_{j+1}]` becomes the half-line branch over
//! `[Psi(a_{j+1}), Psi(a_j))`; note the orientation reversal.

use crate::checks::{AssumptionId, CheckReport};
use crate::error::{Error, Result};
use crate::grid::geometric_grid;
use crate::map::{IntervalMap, RealFn, TAIL_TERM_FLOOR};
use crate::measure::{MeasureKind, MeasureSpec, Space};

/// Interval point below which half-line evaluations are capped; the
/// corresponding `y` is the grid ceiling `Psi(X_MIN_CAP)`.
pub const X_MIN_CAP: f64 = 1e-12;

/// `(x^{-p} - 1)/p`, computed without cancellation near `x = 1`.
pub fn to_halfline(x: f64, p: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Domain(format!("x = {x} outside (0, 1]")));
    }
    Ok((-p * x.ln()).exp_m1() / p)
}

/// Inverse of [`to_halfline`]: `(1 + p y)^{-1/p}`.
pub fn to_interval(y: f64, p: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("y = {y} must be non-negative")));
    }
    Ok((-(p * y).ln_1p() / p).exp())
}

/// The conjugated map on the half-line, together with its inverse-branch
/// data. Immutable and cheap to clone.
#[derive(Clone, Debug)]
pub struct HalfLineMap {
    source: IntervalMap,
    y_max: f64,
}

/// Builds the half-line conjugate of an interval map.
///
/// The caller is responsible for the source map satisfying the structural
/// assumptions (surjective increasing branches, indifferent fixed point);
/// family constructors validate them.
pub fn conjugate(map: &IntervalMap) -> Result<HalfLineMap> {
    let y_max = to_halfline(X_MIN_CAP, map.p())?;
    Ok(HalfLineMap {
        source: map.clone(),
        y_max,
    })
}

impl HalfLineMap {
    pub fn source(&self) -> &IntervalMap {
        &self.source
    }

    pub fn p(&self) -> f64 {
        self.source.p()
    }

    /// Ceiling used when building grids: `Psi(1e-12)`.
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn branch_count(&self) -> Option<usize> {
        self.source.branch_count()
    }

    /// Half-line endpoint `Psi(a_j)`; `j = 0` gives infinity.
    pub fn endpoint(&self, j: usize) -> Result<f64> {
        let a = self.source.endpoint(j)?;
        if a == 0.0 {
            return Ok(f64::INFINITY);
        }
        to_halfline(a, self.p())
    }

    /// Cell index of `y`: the unique `j` with
    /// `Psi(a_{j+1}) <= y < Psi(a_j)`.
    pub fn locate(&self, y: f64) -> Result<usize> {
        self.source.locate(to_interval(y, self.p())?)
    }

    /// Forward map `T_o(y) = Psi(T(Psi^{-1}(y)))`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        let x = to_interval(y, self.p())?;
        let tx = self.source.eval(x)?;
        if tx == 0.0 {
            // T(x) can round to exactly 0 only at cell boundaries; the
            // image then sits beyond any finite ordinate.
            return Ok(f64::INFINITY);
        }
        to_halfline(tx, self.p())
    }

    /// Inverse branch `Psi ∘ psi_j ∘ Psi^{-1}`, mapping into
    /// `[Psi(a_{j+1}), Psi(a_j))`.
    pub fn inverse_branch(&self, j: usize, y: f64) -> Result<f64> {
        let xi = to_interval(y, self.p())?;
        let z = self.source.inverse_branch(j, xi)?;
        to_halfline(z, self.p())
    }

    /// Derivative of the inverse branch, evaluated from interval-side
    /// data: `(psi_j(xi)/xi)^{-p-1} psi_j'(xi)` at `xi = Psi^{-1}(y)`.
    ///
    /// No differentiation through the root finder: this is the primary
    /// derivative path, and finite differences are only a test oracle.
    pub fn inverse_branch_derivative(&self, j: usize, y: f64) -> Result<f64> {
        let p = self.p();
        let xi = to_interval(y, p)?;
        let z = self.source.inverse_branch(j, xi)?;
        let dpsi = self.source.inverse_branch_derivative(j, xi)?;
        Ok((xi / z).powf(p + 1.0) * dpsi)
    }

    /// Tail sum of inverse-branch derivatives `sum_{k >= j}`, truncated
    /// once terms fall below the per-term floor (countable maps).
    pub fn tail_derivative_sum(&self, j: usize, y: f64) -> Result<f64> {
        let n = self.branch_count();
        let mut acc = 0.0;
        let mut k = j;
        loop {
            if let Some(n) = n {
                if k >= n {
                    break;
                }
            }
            let t = self.inverse_branch_derivative(k, y)?;
            acc += t;
            if n.is_none() && t < TAIL_TERM_FLOOR && k > j {
                break;
            }
            k += 1;
            if k > j + 4096 {
                break;
            }
        }
        Ok(acc)
    }
}

/// Checks that `sum_{k >= j} psi_{o,k}'` is non-increasing on a grid, for
/// every `j` up to `j_max` (capped by the branch count).
pub fn check_b3(hmap: &HalfLineMap, grid_size: usize, j_max: usize) -> CheckReport {
    let j_hi = match hmap.branch_count() {
        Some(n) => n.min(j_max + 1),
        None => j_max + 1,
    };
    let y_hi = hmap.y_max().min(1e12);
    let grid = geometric_grid(1e-6, y_hi, grid_size.max(16));
    let mut worst = f64::INFINITY;
    for j in 0..j_hi {
        let mut prev = f64::INFINITY;
        let mut prev_y = 0.0;
        for &y in &grid {
            let s = match hmap.tail_derivative_sum(j, y) {
                Ok(s) => s,
                Err(e) => {
                    return CheckReport::failed_with_detail(
                        AssumptionId::B3,
                        y,
                        grid_size,
                        format!("evaluation error at y={y}: {e}"),
                    )
                }
            };
            let drop = prev - s;
            if drop < -1e-10 {
                let w = crate::checks::refine_decrease_witness(
                    &|t| -hmap.tail_derivative_sum(j, t).unwrap_or(f64::INFINITY),
                    prev_y,
                    y,
                );
                return CheckReport::failed_with_detail(
                    AssumptionId::B3,
                    w,
                    grid_size,
                    format!("tail sum for j={j} increases by {:.3e} at y={y}", -drop),
                );
            }
            worst = worst.min(drop);
            prev = s;
            prev_y = y;
        }
    }
    CheckReport {
        assumption_id: AssumptionId::B3,
        passed: true,
        witness: None,
        estimate: Some(worst),
        grid_size,
        detail: Some(format!("tail sums non-increasing for j < {j_hi}")),
    }
}

/// Pull-back of a Lebesgue-absolutely-continuous half-line measure to the
/// interval: the density is `w(Psi(x)) x^{-p-1}` with `w` the half-line
/// density. For `w == 1` this is the `x^{-p-1}` measure itself.
pub fn pushforward_density(measure_o: &MeasureSpec, p: f64) -> Result<MeasureSpec> {
    if measure_o.space != Space::HalfLine {
        return Err(Error::Domain(
            "pushforward expects a half-line measure".into(),
        ));
    }
    let weight: RealFn = match &measure_o.kind {
        MeasureKind::Lebesgue => std::sync::Arc::new(|_| 1.0),
        MeasureKind::LambdaQ { q } => {
            let q = *q;
            std::sync::Arc::new(move |y: f64| (1.0 + y).powf(-q))
        }
        _ => {
            return Err(Error::Domain(
                "pushforward needs a closed-form half-line density".into(),
            ))
        }
    };
    Ok(MeasureSpec::pullback(weight, p))
}
