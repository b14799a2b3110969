//! The bounded indicator on the half-line whose length-weighted averages
//! oscillate while the `(1+y)^{-1}`-weighted averages tend to zero.
//!
//! Block `k` is `[alpha_k, beta_k)` with `alpha_k = k^k - 1` and
//! `beta_k = 2 k^k - 1`. Along `a = alpha_n` the Lebesgue average of the
//! indicator tends to 0, along `a = beta_n` it stays at or above 1/2,
//! while both subsequences of density-weighted averages decay like
//! `1/log n`. All four sequences have closed forms, evaluated here in
//! extended-exponent arithmetic (and exactly, in rational form, while
//! `k^k` fits in u128).

use serde::Serialize;

use crate::bigfloat::{ExtFloat, Ratio128};
use crate::error::{Error, Result};

/// Largest `n` supported by the closed forms.
pub const MAX_N: u64 = 170;
/// Largest `n` for which `sum k^k` and `2 n^n` stay within u128.
pub const MAX_EXACT_N: u64 = 26;

/// Indicator of the union of blocks `[k^k - 1, 2 k^k - 1)`.
pub fn indicator(y: f64) -> bool {
    if y < 0.0 {
        return false;
    }
    // Largest k with k^k <= y + 1. k^k grows so fast that a forward scan
    // is cheap for every representable y.
    let mut k = 1u64;
    loop {
        let next = ExtFloat::self_power(k + 1).to_f64();
        if next <= y + 1.0 {
            k += 1;
        } else {
            break;
        }
        if k >= MAX_N {
            break;
        }
    }
    if k <= MAX_EXACT_N {
        let kk = (k as u128).pow(k as u32);
        // y in [k^k - 1, 2 k^k - 1)?
        y + 1.0 < (2 * kk) as f64
    } else {
        let kk = ExtFloat::self_power(k).to_f64();
        y + 1.0 < 2.0 * kk
    }
}

/// Block edges `alpha_k`, `beta_k` lying strictly inside `(lo, hi)`,
/// in increasing order.
pub fn block_edges_in(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..=MAX_N {
        let kk = ExtFloat::self_power(k).to_f64();
        if !kk.is_finite() || kk - 1.0 >= hi {
            break;
        }
        for edge in [kk - 1.0, 2.0 * kk - 1.0] {
            if edge > lo && edge < hi {
                out.push(edge);
            }
        }
    }
    out
}

/// `alpha_n = n^n - 1` as f64 (infinite past the f64 range).
pub fn alpha(n: u64) -> f64 {
    ExtFloat::self_power(n).to_f64() - 1.0
}

/// `beta_n = 2 n^n - 1` as f64.
pub fn beta(n: u64) -> f64 {
    2.0 * ExtFloat::self_power(n).to_f64() - 1.0
}

/// The four closed-form finite-volume averages of the indicator at the
/// box edges `alpha_n` (first of each pair) and `beta_n`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SegmentAverages {
    pub n: u64,
    /// `(sum_{k<n} k^k) / (n^n - 1)` — tends to 0.
    pub leb_at_alpha: f64,
    /// `(sum_{k<=n} k^k) / (2 n^n - 1)` — stays >= 1/2.
    pub leb_at_beta: f64,
    /// `(n-1) log 2 / (n log n)`.
    pub lambda1_at_alpha: f64,
    /// `n log 2 / (log 2 + n log n)`.
    pub lambda1_at_beta: f64,
}

/// Evaluates the closed forms; extended-exponent arithmetic keeps the
/// ratios accurate for every supported `n`.
pub fn averages(n: u64) -> Result<SegmentAverages> {
    if n < 2 {
        return Err(Error::Domain(format!("n must be >= 2, got {n}")));
    }
    if n > MAX_N {
        return Err(Error::Overflow(format!(
            "n = {n} beyond the supported range {MAX_N}"
        )));
    }
    let mut partial = ExtFloat::ZERO; // sum_{k<n} k^k
    for k in 1..n {
        partial = partial.add(ExtFloat::self_power(k));
    }
    let nn = ExtFloat::self_power(n);
    let full = partial.add(nn); // sum_{k<=n} k^k
    let alpha_n = minus_one(nn);
    let beta_n = minus_one(nn.mul(ExtFloat::from_u64(2)));

    let nf = n as f64;
    let log2 = std::f64::consts::LN_2;
    Ok(SegmentAverages {
        n,
        leb_at_alpha: partial.ratio(alpha_n)?,
        leb_at_beta: full.ratio(beta_n)?,
        lambda1_at_alpha: (nf - 1.0) * log2 / (nf * nf.ln()),
        lambda1_at_beta: nf * log2 / (log2 + nf * nf.ln()),
    })
}

/// `x - 1` for `x >= 2`: exact while the value fits in f64, and a no-op
/// (to within mantissa precision) beyond 2^53 — the correct rounding for
/// the normalized ratios computed here.
fn minus_one(x: ExtFloat) -> ExtFloat {
    let v = x.to_f64();
    if v.is_finite() {
        return ExtFloat::from_f64(v - 1.0).expect("positive by construction");
    }
    x
}

/// Exact rational values of the two Lebesgue columns, available while
/// `sum k^k` fits in u128 (`n <= 26`).
pub fn averages_exact(n: u64) -> Result<(Ratio128, Ratio128)> {
    if n < 2 {
        return Err(Error::Domain(format!("n must be >= 2, got {n}")));
    }
    if n > MAX_EXACT_N {
        return Err(Error::Overflow(format!(
            "n = {n} exceeds the exact-rational range {MAX_EXACT_N}"
        )));
    }
    let mut partial: u128 = 0;
    for k in 1..n {
        partial += (k as u128).pow(k as u32);
    }
    let nn = (n as u128).pow(n as u32);
    let full = partial + nn;
    Ok((
        Ratio128::new(partial, nn - 1),
        Ratio128::new(full, 2 * nn - 1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_small_blocks() {
        // Block 1 is [0, 1), gap [1, 3), block 2 is [3, 7).
        assert!(indicator(0.5));
        assert!(!indicator(1.5));
        assert!(indicator(3.0));
        assert!(indicator(6.9));
        assert!(!indicator(7.0));
    }

    #[test]
    fn indicator_block_edges_exact() {
        for k in 1..=12u64 {
            let kk = (k as u128).pow(k as u32) as f64;
            let a = kk - 1.0;
            let b = 2.0 * kk - 1.0;
            assert!(indicator(a), "alpha_{k} should be inside its block");
            assert!(!indicator(b), "beta_{k} should be outside (half-open)");
        }
    }

    #[test]
    fn averages_n3() {
        let avg = averages(3).unwrap();
        assert!((avg.leb_at_alpha - 5.0 / 26.0).abs() < 1e-15);
        assert!((avg.leb_at_beta - 32.0 / 53.0).abs() < 1e-15);
        let (a, b) = averages_exact(3).unwrap();
        assert_eq!(a, Ratio128 { num: 5, den: 26 });
        assert_eq!(b, Ratio128 { num: 32, den: 53 });
    }

    #[test]
    fn averages_n10_lambda1() {
        let avg = averages(10).unwrap();
        let expected = 9.0 * std::f64::consts::LN_2 / (10.0 * 10f64.ln());
        assert!((avg.lambda1_at_alpha - expected).abs() < 1e-15);
        assert!((expected - 0.270927).abs() < 1e-6);
    }

    #[test]
    fn beta_column_dominates_half() {
        for n in 2..=MAX_N {
            let avg = averages(n).unwrap();
            assert!(avg.leb_at_beta >= 0.5, "n={n}: {}", avg.leb_at_beta);
        }
    }

    #[test]
    fn dichotomy_bounds() {
        for n in 3..=14u64 {
            let avg = averages(n).unwrap();
            assert!(avg.leb_at_alpha <= 2.0 / n as f64, "n={n}");
            let cap = 3.0 / (n as f64).ln();
            assert!(avg.lambda1_at_alpha <= cap, "n={n}");
            assert!(avg.lambda1_at_beta <= cap, "n={n}");
        }
    }

    #[test]
    fn out_of_range_is_overflow() {
        assert!(matches!(averages(171), Err(Error::Overflow(_))));
        assert!(matches!(averages_exact(27), Err(Error::Overflow(_))));
    }
}
