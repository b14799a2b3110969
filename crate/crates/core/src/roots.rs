//! Bracketed root finding for strictly increasing functions.
//!
//! The branch inverses need a solver that cannot escape its bracket:
//! bisection narrows the bracket to a fixed width, then Newton polishes
//! the root. Newton steps that would leave the bracket fall back to a
//! bisection step.

use crate::error::{Error, Result};

/// Width at which bisection hands over to Newton.
pub const BISECT_WIDTH: f64 = 1e-8;
/// Residual tolerance for the polished root, relative to `max(1, |target|)`.
pub const NEWTON_TOL: f64 = 1e-14;
/// Combined iteration cap for both phases.
pub const MAX_ITER: usize = 200;

/// Solves `f(x) = target` for a strictly increasing `f` on `[lo, hi]`.
///
/// `target` values at or beyond `f(lo)` / `f(hi)` clamp to the endpoints,
/// which tolerates the 1e-12 endpoint slack allowed on branch extensions.
pub fn invert_increasing<F, D>(f: F, df: D, lo: f64, hi: f64, target: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    debug_assert!(lo < hi);
    let flo = f(lo);
    let fhi = f(hi);
    if !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Convergence(format!(
            "non-finite bracket values f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    if target <= flo {
        return Ok(lo);
    }
    if target >= fhi {
        return Ok(hi);
    }

    let tol = NEWTON_TOL * target.abs().max(1.0);
    let mut a = lo;
    let mut b = hi;
    let mut iter = 0usize;

    // Phase 1: bisection down to BISECT_WIDTH.
    while b - a > BISECT_WIDTH {
        iter += 1;
        if iter > MAX_ITER {
            return Err(Error::Convergence(format!(
                "bisection stalled on [{a}, {b}] for target {target}"
            )));
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(Error::Convergence(format!("non-finite value at {mid}")));
        }
        if fm < target {
            a = mid;
        } else {
            b = mid;
        }
    }

    // Phase 2: Newton, kept inside [a, b].
    let mut x = 0.5 * (a + b);
    loop {
        iter += 1;
        if iter > MAX_ITER {
            return Err(Error::Convergence(format!(
                "newton did not reach tolerance near {x} for target {target}"
            )));
        }
        let fx = f(x);
        if (fx - target).abs() <= tol {
            return Ok(x);
        }
        if fx < target {
            a = a.max(x);
        } else {
            b = b.min(x);
        }
        let d = df(x);
        let step_ok = d.is_finite() && d > 0.0;
        let mut next = if step_ok { x - (fx - target) / d } else { f64::NAN };
        if !next.is_finite() || next <= a || next >= b {
            next = 0.5 * (a + b);
        }
        if next == x {
            // Bracket collapsed to machine resolution.
            return Ok(x);
        }
        x = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_quadratic_branch() {
        // x + x^2 = 0.25 has root (-1 + sqrt(2))/2.
        let f = |x: f64| x + x * x;
        let df = |x: f64| 1.0 + 2.0 * x;
        let x = invert_increasing(f, df, 0.0, 1.0, 0.25).unwrap();
        let expected = (-1.0 + 2.0f64.sqrt()) / 2.0;
        assert!((x - expected).abs() < 1e-14, "got {x}, want {expected}");
    }

    #[test]
    fn clamps_to_bracket_ends() {
        let f = |x: f64| x;
        let df = |_: f64| 1.0;
        assert_eq!(invert_increasing(f, df, 0.25, 0.75, 0.0).unwrap(), 0.25);
        assert_eq!(invert_increasing(f, df, 0.25, 0.75, 1.0).unwrap(), 0.75);
    }

    #[test]
    fn residual_meets_tolerance() {
        let k = 3.0;
        let p = 2.0;
        let f = move |x: f64| x + k * x.powf(p + 1.0);
        let df = move |x: f64| 1.0 + k * (p + 1.0) * x.powf(p);
        for i in 1..50 {
            let xi = i as f64 / 50.0;
            let x = invert_increasing(f, df, 0.0, 1.0, xi * (1.0 + k)).unwrap();
            assert!((f(x) - xi * (1.0 + k)).abs() <= 1e-14 * (1.0 + k));
        }
    }
}
