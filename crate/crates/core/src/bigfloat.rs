//! Minimal extended-exponent non-negative floats.
//!
//! Quantities like `k^k` for `k` up to a few hundred overflow f64 (and
//! leave the exact-integer range of f64 already at `k = 14`), but all we
//! ever need from them are sums, products, comparisons and ratios. A
//! mantissa in `[1, 2)` with an `i64` binary exponent covers that range
//! with full f64 mantissa precision.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtFloat {
    /// Mantissa in `[1, 2)`, or 0 for the zero value.
    m: f64,
    e: i64,
}

impl ExtFloat {
    pub const ZERO: ExtFloat = ExtFloat { m: 0.0, e: 0 };

    pub fn from_f64(x: f64) -> Result<Self> {
        if x == 0.0 {
            return Ok(Self::ZERO);
        }
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::Overflow(format!("cannot represent {x}")));
        }
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        if raw_exp == 0 {
            // Subnormal; normalize through multiplication.
            let scaled = x * 2f64.powi(200);
            let mut ef = Self::from_f64(scaled)?;
            ef.e -= 200;
            return Ok(ef);
        }
        let e = raw_exp - 1023;
        let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
        Ok(ExtFloat { m, e })
    }

    pub fn from_u64(x: u64) -> Self {
        Self::from_f64(x as f64).expect("u64 is finite")
    }

    fn normalize(mut self) -> Self {
        if self.m == 0.0 {
            return Self::ZERO;
        }
        while self.m >= 2.0 {
            self.m *= 0.5;
            self.e += 1;
        }
        while self.m < 1.0 {
            self.m *= 2.0;
            self.e -= 1;
        }
        self
    }

    pub fn mul(self, rhs: Self) -> Self {
        if self.m == 0.0 || rhs.m == 0.0 {
            return Self::ZERO;
        }
        ExtFloat {
            m: self.m * rhs.m,
            e: self.e + rhs.e,
        }
        .normalize()
    }

    pub fn add(self, rhs: Self) -> Self {
        if self.m == 0.0 {
            return rhs;
        }
        if rhs.m == 0.0 {
            return self;
        }
        let (hi, lo) = if (self.e, self.m) >= (rhs.e, rhs.m) {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let shift = hi.e - lo.e;
        if shift > 64 {
            return hi;
        }
        ExtFloat {
            m: hi.m + lo.m * 2f64.powi(-(shift as i32)),
            e: hi.e,
        }
        .normalize()
    }

    /// `self^n` by binary exponentiation.
    pub fn pow(self, mut n: u64) -> Self {
        let mut base = self;
        let mut acc = ExtFloat { m: 1.0, e: 0 };
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            n >>= 1;
        }
        acc
    }

    /// `k^k`.
    pub fn self_power(k: u64) -> Self {
        if k == 0 {
            return ExtFloat { m: 1.0, e: 0 };
        }
        Self::from_u64(k).pow(k)
    }

    /// Ratio as f64; the exponents must nearly cancel for this to be
    /// finite, which is the case for the normalized averages computed
    /// here.
    pub fn ratio(self, den: Self) -> Result<f64> {
        if den.m == 0.0 {
            return Err(Error::Overflow("division by zero".into()));
        }
        if self.m == 0.0 {
            return Ok(0.0);
        }
        let de = self.e - den.e;
        if de.abs() > 1000 {
            return Err(Error::Overflow(format!("ratio exponent {de} out of range")));
        }
        Ok(self.m / den.m * 2f64.powi(de as i32))
    }

    pub fn to_f64(self) -> f64 {
        if self.m == 0.0 {
            return 0.0;
        }
        if self.e > 1023 {
            return f64::INFINITY;
        }
        self.m * 2f64.powi(self.e as i32)
    }

    pub fn cmp_value(self, rhs: Self) -> std::cmp::Ordering {
        if self.m == 0.0 && rhs.m == 0.0 {
            return std::cmp::Ordering::Equal;
        }
        (self.e, self.m)
            .partial_cmp(&(rhs.e, rhs.m))
            .expect("mantissas are finite")
    }
}

/// Reduced ratio of two u128 integers; exact arithmetic for the small-n
/// closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio128 {
    pub num: u128,
    pub den: u128,
}

impl Ratio128 {
    pub fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den);
        Ratio128 {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    if a == 0 {
        1
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_small_integers() {
        for k in 1..=30u64 {
            let x = ExtFloat::from_u64(k);
            assert_eq!(x.to_f64(), k as f64);
        }
    }

    #[test]
    fn self_power_exact_in_range() {
        // Exact u128 values as reference while they fit.
        let mut exact: u128;
        for k in 1..=20u64 {
            exact = (k as u128).pow(k as u32);
            let ef = ExtFloat::self_power(k).to_f64();
            let rel = (ef - exact as f64).abs() / exact as f64;
            assert!(rel < 1e-15, "k={k}: {ef} vs {exact}");
        }
    }

    #[test]
    fn self_power_beyond_f64() {
        // 200^200 has exponent ~ 1529 bits; ratio against itself is 1.
        let big = ExtFloat::self_power(200);
        assert_eq!(big.to_f64(), f64::INFINITY);
        assert!((big.ratio(big).unwrap() - 1.0).abs() < 1e-15);
        // (2k)^... comparisons behave.
        assert_eq!(
            ExtFloat::self_power(100).cmp_value(ExtFloat::self_power(101)),
            std::cmp::Ordering::Less
        );
    }

    #[test]
    fn addition_aligns_exponents() {
        let a = ExtFloat::from_u64(3).pow(40); // 3^40 ~ 1.2e19
        let b = ExtFloat::from_u64(7);
        let s = a.add(b);
        let direct = 3f64.powi(40) + 7.0;
        assert!((s.to_f64() - direct).abs() / direct < 1e-15);
    }

    #[test]
    fn ratio128_reduces() {
        let r = Ratio128::new(64, 106);
        assert_eq!(r, Ratio128 { num: 32, den: 53 });
    }
}
