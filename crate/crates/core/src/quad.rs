//! Globally adaptive Gauss-Kronrod quadrature.
//!
//! A 15-point Kronrod rule with embedded 7-point Gauss estimate drives a
//! worst-interval-first refinement loop. The error heap makes the scheme
//! robust against integrands with a handful of jumps or kinks, which is
//! the common case here (indicator observables pushed through branch
//! maps).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// Kronrod abscissae (positive half) and weights for the 15-point rule,
// with the embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// Single application of the 15-point rule on `[a, b]`.
///
/// Returns `(integral, error_estimate)`.
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);

    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = fc.abs() * WGK[7];

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            // XGK[1], XGK[3], XGK[5] are the Gauss nodes.
            resg += WG[j / 2] * fsum;
        }
    }

    let value = resk * half;
    let raw_err = ((resk - resg) * half).abs();
    let floor = 50.0 * f64::EPSILON * resabs * half.abs();
    (value, raw_err.max(floor))
}

struct Segment {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Options for [`adaptive`].
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub max_segments: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_floor: 1e-14,
            max_segments: 40_000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

/// Integrates `f` over `[a, b]` by global adaptive refinement.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!("bad integration range [{a}, {b}]")));
    }

    let (val, err) = qk15(f, a, b);
    if !val.is_finite() {
        return Err(Error::NonIntegrable(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { err, a, b, val });
    let mut total = val;
    let mut total_err = err;

    while total_err > (opts.rel_tol * total.abs()).max(opts.abs_floor) {
        if heap.len() >= opts.max_segments {
            return Err(Error::NonIntegrable(format!(
                "segment budget {} exhausted on [{a}, {b}] (err {total_err:.3e})",
                opts.max_segments
            )));
        }
        let worst = heap.pop().expect("heap cannot be empty while err > 0");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at machine resolution; accept its estimate as-is.
            total_err -= worst.err;
            total = total - worst.val + worst.val;
            heap.push(Segment {
                err: 0.0,
                ..worst
            });
            continue;
        }
        let (v1, e1) = qk15(f, worst.a, mid);
        let (v2, e2) = qk15(f, mid, worst.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::NonIntegrable(format!(
                "non-finite integrand near {mid}"
            )));
        }
        total += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment {
            err: e1,
            a: worst.a,
            b: mid,
            val: v1,
        });
        heap.push(Segment {
            err: e2,
            a: mid,
            b: worst.b,
            val: v2,
        });
    }
    Ok(total)
}

/// Integrates `f` over `[a, b]` with forced subdivision at `cuts`.
///
/// Discontinuity locations that are known in advance (observable
/// breakpoints, branch images) go in `cuts`; points outside `(a, b)` are
/// ignored.
pub fn adaptive_with_cuts<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    cuts: &[f64],
    opts: QuadOptions,
) -> Result<f64> {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|c| *c > a && *c < b).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut lo = a;
    let mut total = 0.0;
    for c in pts {
        total += adaptive(f, lo, c, opts)?;
        lo = c;
    }
    total += adaptive(f, lo, b, opts)?;
    Ok(total)
}

/// Improper integral over `[a, inf)` by geometric panel extension.
///
/// Panels `[a, a+L], [a+L, a+3L], ...` double in width; the sum is accepted
/// once two consecutive panel contributions fall below tolerance. Returns
/// `NonIntegrable` if the panel contributions stop shrinking.
pub fn adaptive_to_infinity<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    first_len: f64,
    opts: QuadOptions,
) -> Result<f64> {
    let mut lo = a;
    let mut len = first_len.max(1e-6);
    let mut total = 0.0;
    let mut small_in_a_row = 0;
    let mut prev_abs = f64::INFINITY;
    let mut grew = 0;
    for _ in 0..96 {
        let hi = lo + len;
        let piece = adaptive(f, lo, hi, opts)?;
        total += piece;
        let thresh = (opts.rel_tol * total.abs()).max(opts.abs_floor);
        if piece.abs() <= thresh {
            small_in_a_row += 1;
            if small_in_a_row >= 2 {
                return Ok(total);
            }
        } else {
            small_in_a_row = 0;
        }
        if piece.abs() > prev_abs * 1.001 {
            grew += 1;
            if grew >= 8 {
                return Err(Error::NonIntegrable(
                    "tail contributions are not decreasing; integral appears to diverge".into(),
                ));
            }
        }
        prev_abs = piece.abs();
        lo = hi;
        len *= 2.0;
    }
    Err(Error::NonIntegrable(
        "tail did not fall below tolerance within the panel budget".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive(&|x: f64| 3.0 * x * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn resolves_a_jump() {
        // Indicator of [0, pi/7] over [0, 1]: exact value pi/7.
        let c = std::f64::consts::PI / 7.0;
        let f = move |x: f64| if x <= c { 1.0 } else { 0.0 };
        let v = adaptive(&f, 0.0, 1.0, QuadOptions::with_rel_tol(1e-10)).unwrap();
        assert!((v - c).abs() < 1e-9, "got {v}, want {c}");
    }

    #[test]
    fn improper_tail() {
        // int_1^inf y^-2 dy = 1.
        let v = adaptive_to_infinity(&|y: f64| y.powi(-2), 1.0, 1.0, QuadOptions::default())
            .unwrap();
        assert!((v - 1.0).abs() < 1e-8, "got {v}");
    }

    #[test]
    fn divergent_tail_is_flagged() {
        let r = adaptive_to_infinity(&|y: f64| 1.0 / (1.0 + y), 0.0, 1.0, QuadOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn log_singularity_from_the_right() {
        // int_0^1 -ln(x) dx = 1 (integrable endpoint singularity).
        let v = adaptive(
            &|x: f64| -(x.max(1e-300)).ln(),
            0.0,
            1.0,
            QuadOptions {
                rel_tol: 1e-9,
                abs_floor: 1e-12,
                max_segments: 40_000,
            },
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-7, "got {v}");
    }
}
