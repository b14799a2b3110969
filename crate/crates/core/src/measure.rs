//! Reference measures on the unit interval and the half-line, closed-form
//! interval masses, and quadrature of observables against them.
//!
//! The interval measures of interest are infinite at 0 (density
//! `x^{-p-1}` and friends); the half-line carries Lebesgue and the
//! `(1+y)^{-q}` family. Integrals of interval measures near 0 are
//! computed after the change of variables that sends the singular
//! endpoint to infinity, where the integrand is bounded.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::halfline::{to_halfline, to_interval};
use crate::map::RealFn;
use crate::observable::Observable;
use crate::quad::{self, QuadOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    UnitInterval,
    HalfLine,
}

/// A possibly infinite interval mass. Infinite masses are an explicit
/// variant, never a floating-point overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mass {
    Finite(f64),
    Infinite,
}

impl Mass {
    pub fn expect_finite(self) -> Result<f64> {
        match self {
            Mass::Finite(v) => Ok(v),
            Mass::Infinite => Err(Error::SingularMass),
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Mass::Finite(_))
    }
}

#[derive(Clone)]
pub enum MeasureKind {
    /// Lebesgue on either space.
    Lebesgue,
    /// Density `x^{-p-1}` on (0,1]; infinite at 0.
    NuP { p: f64 },
    /// Density `(1+y)^{-q}` on the half-line, `q` in (0,1].
    LambdaQ { q: f64 },
    /// Density estimated on a grid (interval side).
    EstimatedMu { density: GridFunction },
    /// Pull-back of a half-line density `w` to the interval:
    /// density `w(Psi(x)) x^{-p-1}` where `Psi` is the conjugation.
    Pullback { weight: RealFn, p: f64 },
}

#[derive(Clone)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    pub space: Space,
}

impl std::fmt::Debug for MeasureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match &self.kind {
            MeasureKind::Lebesgue => "Lebesgue".to_string(),
            MeasureKind::NuP { p } => format!("NuP(p={p})"),
            MeasureKind::LambdaQ { q } => format!("LambdaQ(q={q})"),
            MeasureKind::EstimatedMu { .. } => "EstimatedMu".to_string(),
            MeasureKind::Pullback { p, .. } => format!("Pullback(p={p})"),
        };
        write!(f, "MeasureSpec({name}, {:?})", self.space)
    }
}

impl MeasureSpec {
    pub fn lebesgue(space: Space) -> Self {
        MeasureSpec {
            kind: MeasureKind::Lebesgue,
            space,
        }
    }

    /// The interval measure with density `x^{-p-1}`.
    pub fn nu_p(p: f64) -> Self {
        MeasureSpec {
            kind: MeasureKind::NuP { p },
            space: Space::UnitInterval,
        }
    }

    /// The half-line measure with density `(1+y)^{-q}`, `0 < q <= 1`.
    pub fn lambda_q(q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Config(format!("q must lie in (0, 1], got {q}")));
        }
        Ok(MeasureSpec {
            kind: MeasureKind::LambdaQ { q },
            space: Space::HalfLine,
        })
    }

    pub fn estimated_mu(density: GridFunction) -> Self {
        MeasureSpec {
            kind: MeasureKind::EstimatedMu { density },
            space: Space::UnitInterval,
        }
    }

    pub fn pullback(weight: RealFn, p: f64) -> Self {
        MeasureSpec {
            kind: MeasureKind::Pullback { weight, p },
            space: Space::UnitInterval,
        }
    }

    /// Density with respect to Lebesgue at `x`.
    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Lebesgue => 1.0,
            MeasureKind::NuP { p } => x.powf(-p - 1.0),
            MeasureKind::LambdaQ { q } => (1.0 + x).powf(-q),
            MeasureKind::EstimatedMu { density } => density.eval(x),
            MeasureKind::Pullback { weight, p } => {
                let y = to_halfline(x, *p).unwrap_or(f64::INFINITY);
                weight(y) * x.powf(-p - 1.0)
            }
        }
    }

    /// Mass of `[a, b]`, closed form where one exists.
    ///
    /// For the measures that are infinite at the singular endpoint the
    /// result is the tagged [`Mass::Infinite`], not an error and not an
    /// overflowed float.
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<Mass> {
        if !(0.0 <= a && a <= b) {
            return Err(Error::Domain(format!("bad interval [{a}, {b}]")));
        }
        if self.space == Space::UnitInterval && b > 1.0 {
            return Err(Error::Domain(format!("[{a}, {b}] leaves the unit interval")));
        }
        match &self.kind {
            MeasureKind::Lebesgue => Ok(Mass::Finite(b - a)),
            MeasureKind::NuP { p } => {
                if a == 0.0 {
                    return Ok(Mass::Infinite);
                }
                Ok(Mass::Finite((a.powf(-p) - b.powf(-p)) / p))
            }
            MeasureKind::LambdaQ { q } => {
                if (q - 1.0).abs() < 1e-15 {
                    Ok(Mass::Finite(((1.0 + b) / (1.0 + a)).ln()))
                } else {
                    Ok(Mass::Finite(
                        ((1.0 + b).powf(1.0 - q) - (1.0 + a).powf(1.0 - q)) / (1.0 - q),
                    ))
                }
            }
            MeasureKind::EstimatedMu { density } => {
                if a < density.grid()[0] {
                    // The estimated density only covers its grid; below that
                    // the true measure is infinite at 0.
                    return Ok(Mass::Infinite);
                }
                Ok(Mass::Finite(density.integral_between(a, b)))
            }
            MeasureKind::Pullback { weight, p } => {
                let w = weight.clone();
                if a == 0.0 {
                    // Improper at the singular endpoint; detect divergence.
                    let lo = to_halfline(b, *p)?;
                    match quad::adaptive_to_infinity(
                        &|u| w(u),
                        lo,
                        1.0 + lo.abs(),
                        QuadOptions::with_rel_tol(1e-10),
                    ) {
                        Ok(v) => return Ok(Mass::Finite(v)),
                        Err(_) => return Ok(Mass::Infinite),
                    }
                }
                let (lo, hi) = (to_halfline(b, *p)?, to_halfline(a, *p)?);
                Ok(Mass::Finite(quad::adaptive(
                    &|u| w(u),
                    lo,
                    hi,
                    QuadOptions::with_rel_tol(1e-12),
                )?))
            }
        }
    }
}

/// Integrates `f` against the measure over `[a, b]`.
///
/// Interval measures that are singular at 0 are integrated in the
/// half-line variable, where the weight is bounded; `cuts` marks known
/// discontinuities of `f` (in the original variable).
pub fn integrate(
    measure: &MeasureSpec,
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    integrate_with_cuts(measure, f, a, b, &[], tol)
}

pub fn integrate_with_cuts(
    measure: &MeasureSpec,
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    cuts: &[f64],
    tol: f64,
) -> Result<f64> {
    if !(a <= b) {
        return Err(Error::Domain(format!("bad range [{a}, {b}]")));
    }
    let opts = QuadOptions::with_rel_tol(tol);
    match &measure.kind {
        MeasureKind::Lebesgue => quad::adaptive_with_cuts(&|x| f(x), a, b, cuts, opts),
        MeasureKind::LambdaQ { q } => {
            let q = *q;
            quad::adaptive_with_cuts(&|y| f(y) * (1.0 + y).powf(-q), a, b, cuts, opts)
        }
        MeasureKind::NuP { p } => {
            let p = *p;
            if a == 0.0 {
                let lo = to_halfline(b, p)?;
                return quad::adaptive_to_infinity(
                    &|u| f(to_interval(u, p).unwrap()),
                    lo,
                    (1.0 + lo.abs()).min(1e6),
                    opts,
                );
            }
            let (lo, hi) = (to_halfline(b, p)?, to_halfline(a, p)?);
            let ucuts: Vec<f64> = cuts
                .iter()
                .filter(|&&c| c > 0.0 && c <= 1.0)
                .map(|&c| to_halfline(c, p).unwrap())
                .collect();
            quad::adaptive_with_cuts(&|u| f(to_interval(u, p).unwrap()), lo, hi, &ucuts, opts)
        }
        MeasureKind::Pullback { weight, p } => {
            let p = *p;
            let w = weight.clone();
            if a == 0.0 {
                let lo = to_halfline(b, p)?;
                return quad::adaptive_to_infinity(
                    &|u| f(to_interval(u, p).unwrap()) * w(u),
                    lo,
                    (1.0 + lo.abs()).min(1e6),
                    opts,
                );
            }
            let (lo, hi) = (to_halfline(b, p)?, to_halfline(a, p)?);
            let ucuts: Vec<f64> = cuts
                .iter()
                .filter(|&&c| c > 0.0 && c <= 1.0)
                .map(|&c| to_halfline(c, p).unwrap())
                .collect();
            quad::adaptive_with_cuts(
                &|u| f(to_interval(u, p).unwrap()) * w(u),
                lo,
                hi,
                &ucuts,
                opts,
            )
        }
        MeasureKind::EstimatedMu { density } => {
            if a < density.grid()[0] {
                return Err(Error::Domain(format!(
                    "integration range reaches below the estimated-density grid ({a} < {})",
                    density.grid()[0]
                )));
            }
            // The density is itself a grid estimate; integrate the product
            // cell by cell on its own grid.
            let d = density;
            let mut all_cuts = vec![a, b];
            all_cuts.extend_from_slice(cuts);
            Ok(restrict_product_integral(d, &|x| f(x), a, b, &all_cuts))
        }
    }
}

fn restrict_product_integral(
    density: &GridFunction,
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    cuts: &[f64],
) -> f64 {
    let indicator = move |x: f64| if x >= a && x <= b { f(x) } else { 0.0 };
    density.integrate_against(indicator, cuts)
}

/// Integrates an observable, splitting at its declared breakpoints.
pub fn integrate_observable(
    measure: &MeasureSpec,
    obs: &Observable,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    let cuts = obs.breakpoints_in(a, b);
    integrate_with_cuts(measure, &|x| obs.eval(x), a, b, &cuts, tol)
}

/// Normalized average of a global observable over one finite-volume box:
/// `[a, 1]` on the interval, `[0, a]` on the half-line.
pub fn finite_volume_average(measure: &MeasureSpec, f_glob: &Observable, a: f64) -> Result<f64> {
    finite_volume_average_tol(measure, f_glob, a, 1e-10)
}

pub fn finite_volume_average_tol(
    measure: &MeasureSpec,
    f_glob: &Observable,
    a: f64,
    tol: f64,
) -> Result<f64> {
    let (lo, hi) = match measure.space {
        Space::UnitInterval => {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Domain(format!("a = {a} outside (0, 1)")));
            }
            (a, 1.0)
        }
        Space::HalfLine => {
            if !(a > 0.0) {
                return Err(Error::Domain(format!("a = {a} must be positive")));
            }
            (0.0, a)
        }
    };
    let mass = measure.interval_mass(lo, hi)?.expect_finite()?;
    if mass <= 0.0 {
        return Err(Error::Domain(format!("empty box at a = {a}")));
    }
    let num = integrate_observable(measure, f_glob, lo, hi, tol)?;
    Ok(num / mass)
}

/// Trace of finite-volume averages along an exhausting sequence of boxes.
#[derive(Clone, Debug, Serialize)]
pub struct AverageEstimate {
    pub value: f64,
    pub converged: bool,
    /// `(a, average at a)` for every probed box.
    pub trace: Vec<(f64, f64)>,
}

/// Estimates the infinite-volume average of `f_glob` along `a_sequence`.
///
/// Converged means the last five averages all lie within `tol` of their
/// mean; the reported value is that mean. Non-convergence is a result,
/// not an error.
pub fn estimate_global_average(
    measure: &MeasureSpec,
    f_glob: &Observable,
    a_sequence: &[f64],
    tol: f64,
) -> Result<AverageEstimate> {
    if a_sequence.is_empty() {
        return Err(Error::Config("empty box sequence".into()));
    }
    let mut trace = Vec::with_capacity(a_sequence.len());
    for &a in a_sequence {
        let avg = finite_volume_average_tol(measure, f_glob, a, 1e-9)?;
        trace.push((a, avg));
    }
    let tail: Vec<f64> = trace
        .iter()
        .rev()
        .take(5)
        .map(|&(_, v)| v)
        .collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let converged = tail.len() == 5 && tail.iter().all(|v| (v - mean).abs() <= tol);
    Ok(AverageEstimate {
        value: mean,
        converged,
        trace,
    })
}

/// Dyadic box sequence for the given space: `2^-k` toward 0 on the
/// interval, `2^k` toward infinity on the half-line.
pub fn default_box_sequence(space: Space, len: usize) -> Vec<f64> {
    match space {
        Space::UnitInterval => (1..=len).map(|k| 0.5f64.powi(k as i32)).collect(),
        Space::HalfLine => (0..len).map(|k| 2f64.powi(k as i32)).collect(),
    }
}

/// Parses the CLI measure syntax: `leb | nu_p | lambda_q:<q> | mu`.
///
/// `nu_p` takes `p` from the map, `mu` is resolved by the caller (it
/// needs a density estimate), so this returns a tag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureSelector {
    Lebesgue,
    NuP,
    LambdaQ(f64),
    Mu,
}

impl MeasureSelector {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "leb" {
            return Ok(MeasureSelector::Lebesgue);
        }
        if s == "nu_p" {
            return Ok(MeasureSelector::NuP);
        }
        if s == "mu" {
            return Ok(MeasureSelector::Mu);
        }
        if let Some(q) = s.strip_prefix("lambda_q:") {
            let q: f64 = q
                .parse()
                .map_err(|_| Error::Config(format!("bad q in '{s}'")))?;
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Config(format!("q must lie in (0,1], got {q}")));
            }
            return Ok(MeasureSelector::LambdaQ(q));
        }
        Err(Error::Config(format!(
            "unknown measure '{s}' (expected leb | nu_p | lambda_q:<q> | mu)"
        )))
    }
}

pub type WeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
