//! Markov maps of (0,1] with full increasing branches and an indifferent
//! fixed point at the origin.
//!
//! A map is a list of branches over the cells `(a_j, a_{j+1}]` of a
//! partition `0 = a_0 < a_1 < ... <= 1`. Each branch carries its forward
//! function, first and second derivatives, and optionally a closed-form
//! inverse. Maps with countably many branches are represented lazily by a
//! branch generator.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tolerance on branch surjectivity at cell endpoints.
pub const ENDPOINT_TOL: f64 = 1e-12;
/// Per-term floor below which countable tail sums are truncated.
pub const TAIL_TERM_FLOOR: f64 = 1e-16;
/// Hard cap on the number of branches visited in countable maps.
pub const BRANCH_HARD_CAP: usize = 4096;

/// One increasing surjective branch over the cell `(lower, upper]`.
#[derive(Clone)]
pub struct BranchSpec {
    pub lower: f64,
    pub upper: f64,
    forward: RealFn,
    derivative: RealFn,
    second_derivative: RealFn,
    inverse: Option<RealFn>,
}

impl BranchSpec {
    pub fn new(
        lower: f64,
        upper: f64,
        forward: RealFn,
        derivative: RealFn,
        second_derivative: RealFn,
    ) -> Self {
        BranchSpec {
            lower,
            upper,
            forward,
            derivative,
            second_derivative,
            inverse: None,
        }
    }

    pub fn with_inverse(mut self, inverse: RealFn) -> Self {
        self.inverse = Some(inverse);
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        (self.second_derivative)(x)
    }

    pub fn has_closed_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    /// Inverse image of `xi` under this branch, accurate to
    /// `1e-14 * max(1, |xi|)` in residual.
    pub fn invert(&self, xi: f64) -> Result<f64> {
        if let Some(inv) = &self.inverse {
            let x = inv(xi);
            return Ok(x.clamp(self.lower, self.upper));
        }
        roots::invert_increasing(
            |x| (self.forward)(x),
            |x| (self.derivative)(x),
            self.lower,
            self.upper,
            xi,
        )
    }

    /// Derivative of the inverse branch at `xi`: `1 / T'(psi(xi))`.
    pub fn invert_derivative(&self, xi: f64) -> Result<f64> {
        let x = self.invert(xi)?;
        let d = (self.derivative)(x);
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidBranch(format!(
                "non-positive derivative {d} at {x}"
            )));
        }
        Ok(1.0 / d)
    }

    /// Checks surjectivity of the continuous extension and strict
    /// monotonicity on a sample grid.
    pub fn validate(&self, samples: usize) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::InvalidBranch(format!(
                "empty cell [{}, {}]",
                self.lower, self.upper
            )));
        }
        let f_lo = self.eval(self.lower);
        let f_hi = self.eval(self.upper);
        if f_lo.abs() > ENDPOINT_TOL {
            return Err(Error::InvalidBranch(format!(
                "branch extension at {} evaluates to {f_lo}, expected 0",
                self.lower
            )));
        }
        if (f_hi - 1.0).abs() > ENDPOINT_TOL {
            return Err(Error::InvalidBranch(format!(
                "branch extension at {} evaluates to {f_hi}, expected 1",
                self.upper
            )));
        }
        let n = samples.max(2);
        let mut prev = f_lo;
        for i in 1..=n {
            let x = self.lower + (self.upper - self.lower) * i as f64 / (n as f64 + 1.0);
            let fx = self.eval(x);
            let dx = self.deriv(x);
            if !(dx > 0.0) {
                return Err(Error::InvalidBranch(format!(
                    "derivative {dx} not positive at {x}"
                )));
            }
            if fx <= prev {
                return Err(Error::InvalidBranch(format!(
                    "branch not strictly increasing near {x}"
                )));
            }
            prev = fx;
        }
        Ok(())
    }
}

impl std::fmt::Debug for BranchSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BranchSpec")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("closed_inverse", &self.inverse.is_some())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    GeneralizedPm,
    GeneralizedLsv,
    PerturbedPm,
    PerturbedLsv,
    Custom,
}

/// Smooth perturbation attached to one branch (or to all of them).
#[derive(Clone)]
pub struct PerturbationSpec {
    pub eta: RealFn,
    pub eta_prime: RealFn,
    pub eta_second: RealFn,
    /// Declared amplitude for the pointwise bound checks.
    pub epsilon: f64,
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        PerturbationSpec {
            eta: Arc::new(|_| 0.0),
            eta_prime: Arc::new(|_| 0.0),
            eta_second: Arc::new(|_| 0.0),
            epsilon: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationScope {
    AllBranches,
    Branch(usize),
}

#[derive(Clone)]
enum BranchRepr {
    Finite(Arc<Vec<BranchSpec>>),
    Countable(Arc<dyn Fn(usize) -> BranchSpec + Send + Sync>),
}

/// A Markov map of (0,1] with increasing surjective branches.
///
/// Immutable after construction; all operations are pure and the type is
/// cheap to clone and share across threads.
#[derive(Clone)]
pub struct IntervalMap {
    branches: BranchRepr,
    /// For finite maps: `[0, a_1, ..., a_N = 1]`.
    endpoints: Option<Arc<Vec<f64>>>,
    p: f64,
    kappa: f64,
    b_o: f64,
    family: FamilyTag,
    perturbations: Arc<Vec<(PerturbationScope, PerturbationSpec)>>,
}

fn pm_branch(kappa: f64, p: f64, j: usize, lower: f64, upper: f64) -> BranchSpec {
    let jf = j as f64;
    let forward: RealFn = Arc::new(move |x: f64| x + kappa * x.powf(p + 1.0) - jf);
    let derivative: RealFn = Arc::new(move |x: f64| 1.0 + kappa * (p + 1.0) * x.powf(p));
    let second: RealFn = Arc::new(move |x: f64| kappa * (p + 1.0) * p * x.powf(p - 1.0));
    let mut spec = BranchSpec::new(lower, upper, forward, derivative, second);
    if (p - 1.0).abs() < 1e-12 {
        // x + k x^2 = xi + j  =>  stable quadratic formula plus one polish step.
        let inv: RealFn = Arc::new(move |xi: f64| {
            let t = xi + jf;
            let x0 = 2.0 * t / (1.0 + (1.0 + 4.0 * kappa * t).sqrt());
            let fx = x0 + kappa * x0 * x0 - jf;
            let d = 1.0 + 2.0 * kappa * x0;
            x0 - (fx - xi) / d
        });
        spec = spec.with_inverse(inv);
    } else if (p - 2.0).abs() < 1e-12 {
        // x + k x^3 = xi + j: depressed cubic with a single real root,
        // solved by the hyperbolic form, then one polish step.
        let inv: RealFn = Arc::new(move |xi: f64| {
            let q = (xi + jf) / kappa;
            let pc = 1.0 / kappa;
            let s = (pc / 3.0).sqrt();
            let arg = q * 3.0 / (2.0 * pc) * (3.0 / pc).sqrt();
            let x0 = 2.0 * s * ((arg.asinh()) / 3.0).sinh();
            let fx = x0 + kappa * x0 * x0 * x0 - jf;
            let d = 1.0 + 3.0 * kappa * x0 * x0;
            x0 - (fx - xi) / d
        });
        spec = spec.with_inverse(inv);
    }
    spec
}

fn linear_branch(lower: f64, upper: f64) -> BranchSpec {
    let len = upper - lower;
    let forward: RealFn = Arc::new(move |x: f64| (x - lower) / len);
    let derivative: RealFn = Arc::new(move |_| 1.0 / len);
    let second: RealFn = Arc::new(|_| 0.0);
    let inverse: RealFn = Arc::new(move |xi: f64| lower + xi * len);
    BranchSpec::new(lower, upper, forward, derivative, second).with_inverse(inverse)
}

impl IntervalMap {
    /// Map `x -> x + kappa x^{p+1} mod 1` with `kappa + 1` branches.
    ///
    /// Interior endpoints are the roots of `x + kappa x^{p+1} = j`.
    pub fn generalized_pm(kappa: u32, p: f64) -> Result<Self> {
        if kappa < 1 {
            return Err(Error::Config("kappa must be a positive integer".into()));
        }
        if p < 1.0 {
            return Err(Error::Config(format!("index p must be >= 1, got {p}")));
        }
        let kf = kappa as f64;
        let base = move |x: f64| x + kf * x.powf(p + 1.0);
        let dbase = move |x: f64| 1.0 + kf * (p + 1.0) * x.powf(p);
        let mut endpoints = vec![0.0];
        for j in 1..=kappa {
            let a = roots::invert_increasing(base, dbase, 0.0, 1.0, j as f64)?;
            endpoints.push(a);
        }
        endpoints.push(1.0);
        let branches: Vec<BranchSpec> = (0..=kappa as usize)
            .map(|j| pm_branch(kf, p, j, endpoints[j], endpoints[j + 1]))
            .collect();
        let b_o = endpoints[1] / 2.0;
        let map = IntervalMap {
            branches: BranchRepr::Finite(Arc::new(branches)),
            endpoints: Some(Arc::new(endpoints)),
            p,
            kappa: kf,
            b_o,
            family: FamilyTag::GeneralizedPm,
            perturbations: Arc::new(Vec::new()),
        };
        map.validate()?;
        Ok(map)
    }

    /// First branch `x + kappa x^{p+1}` on `(0, a_1]`, linear surjective
    /// branches over the remaining cells.
    ///
    /// `interior` lists `a_1 < a_2 < ... < a_{N-1}` (excluding 0 and 1);
    /// `a_1` must satisfy `a_1 + kappa a_1^{p+1} = 1` within 1e-12.
    pub fn generalized_lsv(kappa: f64, p: f64, interior: &[f64]) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
        }
        if p < 1.0 {
            return Err(Error::Config(format!("index p must be >= 1, got {p}")));
        }
        if interior.is_empty() {
            return Err(Error::Config("at least one interior endpoint required".into()));
        }
        let a1 = interior[0];
        if !(0.0 < a1 && a1 < 1.0) {
            return Err(Error::Config(format!("a_1 must lie in (0,1), got {a1}")));
        }
        let reached = a1 + kappa * a1.powf(p + 1.0);
        if (reached - 1.0).abs() > ENDPOINT_TOL {
            return Err(Error::EndpointMismatch {
                expected: 1.0,
                got: reached,
                tol: ENDPOINT_TOL,
            });
        }
        let mut endpoints = vec![0.0];
        endpoints.extend_from_slice(interior);
        endpoints.push(1.0);
        for w in endpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config(format!(
                    "endpoints not strictly increasing near {}",
                    w[0]
                )));
            }
        }
        let mut branches = vec![pm_branch(kappa, p, 0, 0.0, a1)];
        for j in 1..endpoints.len() - 1 {
            branches.push(linear_branch(endpoints[j], endpoints[j + 1]));
        }
        let map = IntervalMap {
            branches: BranchRepr::Finite(Arc::new(branches)),
            endpoints: Some(Arc::new(endpoints)),
            p,
            kappa,
            b_o: a1 / 2.0,
            family: FamilyTag::GeneralizedLsv,
            perturbations: Arc::new(Vec::new()),
        };
        map.validate()?;
        Ok(map)
    }

    /// Two-branch map with `kappa = 2^p`, so `a_1 = 1/2`.
    pub fn standard_lsv(p: f64) -> Result<Self> {
        Self::generalized_lsv(2f64.powf(p), p, &[0.5])
    }

    /// Countably many branches: `endpoint(j)` returns `a_j` with
    /// `a_0 = 0`, strictly increasing to 1. Branch 0 is `x + kappa x^{p+1}`
    /// with `kappa` derived from `a_1`; the rest are linear surjective.
    pub fn lsv_countable(
        p: f64,
        endpoint: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        if p < 1.0 {
            return Err(Error::Config(format!("index p must be >= 1, got {p}")));
        }
        let a1 = endpoint(1);
        if !(0.0 < a1 && a1 < 1.0) {
            return Err(Error::Config(format!("a_1 must lie in (0,1), got {a1}")));
        }
        let kappa = (1.0 - a1) / a1.powf(p + 1.0);
        let ep = endpoint.clone();
        let make: Arc<dyn Fn(usize) -> BranchSpec + Send + Sync> = Arc::new(move |j| {
            if j == 0 {
                pm_branch(kappa, p, 0, 0.0, ep(1))
            } else {
                linear_branch(ep(j), ep(j + 1))
            }
        });
        let map = IntervalMap {
            branches: BranchRepr::Countable(make),
            endpoints: None,
            p,
            kappa,
            b_o: a1 / 2.0,
            family: FamilyTag::GeneralizedLsv,
            perturbations: Arc::new(Vec::new()),
        };
        // Validating a prefix of the branch family catches generator bugs.
        for j in 0..8 {
            map.branch(j)?.validate(32)?;
        }
        Ok(map)
    }

    /// Perturbed modular family: `x -> x + kappa x^{p+1} + eta(x) mod 1`
    /// with a single global perturbation, `eta(1) = 0`.
    pub fn perturbed_pm(kappa: u32, p: f64, eta: PerturbationSpec) -> Result<Self> {
        if kappa < 1 {
            return Err(Error::Config("kappa must be a positive integer".into()));
        }
        let eta_at_one = (eta.eta)(1.0);
        if eta_at_one.abs() > ENDPOINT_TOL {
            return Err(Error::InvalidBranch(format!(
                "global perturbation must vanish at 1, got {eta_at_one}"
            )));
        }
        let kf = kappa as f64;
        let e = eta.clone();
        let base = move |x: f64| x + kf * x.powf(p + 1.0) + (e.eta)(x);
        let e = eta.clone();
        let dbase = move |x: f64| 1.0 + kf * (p + 1.0) * x.powf(p) + (e.eta_prime)(x);
        let mut endpoints = vec![0.0];
        for j in 1..=kappa {
            endpoints.push(roots::invert_increasing(&base, &dbase, 0.0, 1.0, j as f64)?);
        }
        endpoints.push(1.0);
        let mut branches = Vec::with_capacity(kappa as usize + 1);
        for j in 0..=kappa as usize {
            let jf = j as f64;
            let e = eta.clone();
            let forward: RealFn =
                Arc::new(move |x: f64| x + kf * x.powf(p + 1.0) + (e.eta)(x) - jf);
            let e = eta.clone();
            let derivative: RealFn =
                Arc::new(move |x: f64| 1.0 + kf * (p + 1.0) * x.powf(p) + (e.eta_prime)(x));
            let e = eta.clone();
            let second: RealFn = Arc::new(move |x: f64| {
                kf * (p + 1.0) * p * x.powf(p - 1.0) + (e.eta_second)(x)
            });
            branches.push(BranchSpec::new(
                endpoints[j],
                endpoints[j + 1],
                forward,
                derivative,
                second,
            ));
        }
        let b_o = endpoints[1] / 2.0;
        let map = IntervalMap {
            branches: BranchRepr::Finite(Arc::new(branches)),
            endpoints: Some(Arc::new(endpoints)),
            p,
            kappa: kf,
            b_o,
            family: FamilyTag::PerturbedPm,
            perturbations: Arc::new(vec![(PerturbationScope::AllBranches, eta)]),
        };
        map.validate()?;
        Ok(map)
    }

    /// Perturbed piecewise-linear family: branch 0 is
    /// `x + kappa x^{p+1} + eta_0(x)` (with `eta_0(a_1) = 0` so the
    /// endpoint relation is unchanged); branch `j >= 1` is the linear
    /// branch plus `eta_j`, which must vanish at both cell endpoints.
    pub fn perturbed_lsv(
        kappa: f64,
        p: f64,
        interior: &[f64],
        etas: Vec<PerturbationSpec>,
    ) -> Result<Self> {
        let unperturbed = Self::generalized_lsv(kappa, p, interior)?;
        let endpoints = unperturbed.endpoints.as_ref().unwrap().clone();
        let n_branches = endpoints.len() - 1;
        if etas.len() != n_branches {
            return Err(Error::Config(format!(
                "need one perturbation per branch ({n_branches}), got {}",
                etas.len()
            )));
        }
        let mut branches = Vec::with_capacity(n_branches);
        let mut scoped = Vec::with_capacity(n_branches);
        for (j, eta) in etas.into_iter().enumerate() {
            let lower = endpoints[j];
            let upper = endpoints[j + 1];
            for (name, x) in [("lower", lower), ("upper", upper)] {
                let v = (eta.eta)(x);
                if v.abs() > ENDPOINT_TOL && !(j == 0 && name == "lower") {
                    return Err(Error::InvalidBranch(format!(
                        "perturbation of branch {j} must vanish at the {name} endpoint, got {v}"
                    )));
                }
            }
            let base = unperturbed.branch(j)?;
            let e = eta.clone();
            let b = base.clone();
            let forward: RealFn = Arc::new(move |x: f64| b.eval(x) + (e.eta)(x));
            let e = eta.clone();
            let b = base.clone();
            let derivative: RealFn = Arc::new(move |x: f64| b.deriv(x) + (e.eta_prime)(x));
            let e = eta.clone();
            let b = base.clone();
            let second: RealFn = Arc::new(move |x: f64| b.deriv2(x) + (e.eta_second)(x));
            branches.push(BranchSpec::new(lower, upper, forward, derivative, second));
            scoped.push((PerturbationScope::Branch(j), eta));
        }
        let map = IntervalMap {
            branches: BranchRepr::Finite(Arc::new(branches)),
            endpoints: Some(endpoints),
            p,
            kappa,
            b_o: unperturbed.b_o,
            family: FamilyTag::PerturbedLsv,
            perturbations: Arc::new(scoped),
        };
        map.validate()?;
        Ok(map)
    }

    /// Assembles a map from explicit branches. Used for fixtures and for
    /// maps outside the built-in families; branches must tile (0,1].
    pub fn custom(branches: Vec<BranchSpec>, p: f64, kappa: f64, b_o: f64) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Config("no branches".into()));
        }
        let mut endpoints = vec![branches[0].lower];
        for b in &branches {
            endpoints.push(b.upper);
        }
        if endpoints[0] != 0.0 {
            return Err(Error::InvalidBranch("first cell must start at 0".into()));
        }
        if (endpoints[endpoints.len() - 1] - 1.0).abs() > ENDPOINT_TOL {
            return Err(Error::InvalidBranch("last cell must end at 1".into()));
        }
        for (i, w) in branches.windows(2).enumerate() {
            if (w[0].upper - w[1].lower).abs() > ENDPOINT_TOL {
                return Err(Error::InvalidBranch(format!(
                    "cells {i} and {} do not share an endpoint",
                    i + 1
                )));
            }
        }
        Ok(IntervalMap {
            branches: BranchRepr::Finite(Arc::new(branches)),
            endpoints: Some(Arc::new(endpoints)),
            p,
            kappa,
            b_o,
            family: FamilyTag::Custom,
            perturbations: Arc::new(Vec::new()),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn b_o(&self) -> f64 {
        self.b_o
    }

    pub fn family(&self) -> FamilyTag {
        self.family
    }

    pub fn perturbations(&self) -> &[(PerturbationScope, PerturbationSpec)] {
        &self.perturbations
    }

    /// `Some(N)` for finite maps, `None` for countable ones.
    pub fn branch_count(&self) -> Option<usize> {
        match &self.branches {
            BranchRepr::Finite(v) => Some(v.len()),
            BranchRepr::Countable(_) => None,
        }
    }

    pub fn branch(&self, j: usize) -> Result<BranchSpec> {
        match &self.branches {
            BranchRepr::Finite(v) => v
                .get(j)
                .cloned()
                .ok_or_else(|| Error::Domain(format!("branch index {j} out of range"))),
            BranchRepr::Countable(make) => {
                if j >= BRANCH_HARD_CAP {
                    return Err(Error::Domain(format!(
                        "branch index {j} beyond hard cap {BRANCH_HARD_CAP}"
                    )));
                }
                Ok(make(j))
            }
        }
    }

    /// Partition endpoint `a_j` (`a_0 = 0`; `a_N = 1` for finite maps).
    pub fn endpoint(&self, j: usize) -> Result<f64> {
        if let Some(eps) = &self.endpoints {
            return eps
                .get(j)
                .copied()
                .ok_or_else(|| Error::Domain(format!("endpoint index {j} out of range")));
        }
        if j == 0 {
            return Ok(0.0);
        }
        Ok(self.branch(j - 1)?.upper)
    }

    /// Index `j` of the cell `(a_j, a_{j+1}]` containing `x`.
    pub fn locate(&self, x: f64) -> Result<usize> {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::Domain(format!("x = {x} outside (0, 1]")));
        }
        match &self.branches {
            BranchRepr::Finite(_) => {
                let eps = self.endpoints.as_ref().expect("finite map has endpoints");
                // First index with a_idx >= x, so the cell is idx - 1.
                let idx = eps.partition_point(|a| *a < x);
                Ok(idx - 1)
            }
            BranchRepr::Countable(_) => {
                let mut j = 0usize;
                loop {
                    let b = self.branch(j)?;
                    if x <= b.upper {
                        return Ok(j);
                    }
                    j += 1;
                }
            }
        }
    }

    /// Forward image `T(x)` for `x` in (0, 1].
    pub fn eval(&self, x: f64) -> Result<f64> {
        let j = self.locate(x)?;
        let v = self.branch(j)?.eval(x);
        // Guard against last-ulp excursions of the branch extension.
        Ok(v.clamp(0.0, 1.0))
    }

    /// Inverse branch `psi_j(xi)`, in `(a_j, a_{j+1}]`.
    ///
    /// Cells of countable families collapse to zero width once their
    /// endpoints are closer than one ulp; such cells answer with their
    /// endpoint (and zero derivative mass below).
    pub fn inverse_branch(&self, j: usize, xi: f64) -> Result<f64> {
        if !(xi >= 0.0 && xi <= 1.0) {
            return Err(Error::Domain(format!("xi = {xi} outside [0, 1]")));
        }
        let b = self.branch(j)?;
        if b.upper <= b.lower {
            return Ok(b.lower);
        }
        b.invert(xi)
    }

    /// `psi_j'(xi) = 1 / T'(psi_j(xi))`; 0 for cells degenerate at f64
    /// resolution.
    pub fn inverse_branch_derivative(&self, j: usize, xi: f64) -> Result<f64> {
        if !(xi >= 0.0 && xi <= 1.0) {
            return Err(Error::Domain(format!("xi = {xi} outside [0, 1]")));
        }
        let b = self.branch(j)?;
        if b.upper <= b.lower {
            return Ok(0.0);
        }
        b.invert_derivative(xi)
    }

    /// Forward orbit `[x0, T(x0), ..., T^n(x0)]`.
    pub fn orbit(&self, x0: f64, n: usize) -> Result<Vec<f64>> {
        if !(x0 > 0.0 && x0 <= 1.0) {
            return Err(Error::Domain(format!("x0 = {x0} outside (0, 1]")));
        }
        let mut out = Vec::with_capacity(n + 1);
        out.push(x0);
        let mut x = x0;
        for _ in 0..n {
            x = self.eval(x)?;
            out.push(x);
        }
        Ok(out)
    }

    /// Structural validation of all branches (a prefix for countable maps).
    pub fn validate(&self) -> Result<()> {
        let n = self.branch_count().unwrap_or(8);
        for j in 0..n {
            self.branch(j)?.validate(48)?;
        }
        if let Some(eps) = &self.endpoints {
            for w in eps.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::InvalidBranch(format!(
                        "endpoints not strictly increasing near {}",
                        w[0]
                    )));
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for IntervalMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IntervalMap")
            .field("family", &self.family)
            .field("p", &self.p)
            .field("kappa", &self.kappa)
            .field("b_o", &self.b_o)
            .field("branches", &self.branch_count())
            .finish()
    }
}

/// JSON description of a map.
///
/// ```json
/// {"family": "generalized_lsv", "kappa": 2.0, "p": 1.0, "endpoints": [0.5]}
/// ```
///
/// `endpoints` lists interior endpoints only. For the perturbed families,
/// `perturbation.epsilon` selects the built-in perturbation
/// `eta(x) = eps x^{2p+1} (1 - x^2)` (vanishing at 1), applied globally.
/// Custom branches are supplied programmatically, not through JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapSpec {
    pub family: FamilyTag,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub epsilon: f64,
}

/// The built-in JSON-selectable perturbation: `eps x^{2p+1} (1 - x^2)`.
///
/// The declared amplitude is the numerically measured envelope of
/// `|eta| / x^{2p+1}`, `|eta'| / x^{2p}`, `|eta''| / x^{2p-1}`.
pub fn polynomial_perturbation(eps: f64, p: f64) -> PerturbationSpec {
    let a = 2.0 * p + 1.0;
    let eta: RealFn = Arc::new(move |x: f64| eps * x.powf(a) * (1.0 - x * x));
    let eta_prime: RealFn =
        Arc::new(move |x: f64| eps * (a * x.powf(a - 1.0) - (a + 2.0) * x.powf(a + 1.0)));
    let eta_second: RealFn = Arc::new(move |x: f64| {
        eps * (a * (a - 1.0) * x.powf(a - 2.0) - (a + 2.0) * (a + 1.0) * x.powf(a))
    });
    let mut envelope: f64 = 0.0;
    for i in 1..=512 {
        let x = i as f64 / 512.0;
        envelope = envelope
            .max((eta(x)).abs() / x.powf(a))
            .max((eta_prime(x)).abs() / x.powf(a - 1.0))
            .max((eta_second(x)).abs() / x.powf(a - 2.0));
    }
    PerturbationSpec {
        eta,
        eta_prime,
        eta_second,
        epsilon: envelope * 1.000001,
    }
}

impl MapSpec {
    pub fn build(&self) -> Result<IntervalMap> {
        match self.family {
            FamilyTag::GeneralizedPm => {
                let kappa = self.integer_kappa()?;
                IntervalMap::generalized_pm(kappa, self.p)
            }
            FamilyTag::GeneralizedLsv => {
                let kappa = match self.kappa {
                    Some(k) => k,
                    None => match &self.endpoints {
                        Some(eps) if !eps.is_empty() => {
                            let a1 = eps[0];
                            (1.0 - a1) / a1.powf(self.p + 1.0)
                        }
                        _ => {
                            return Err(Error::Config(
                                "generalized_lsv needs kappa or endpoints".into(),
                            ))
                        }
                    },
                };
                let interior = match &self.endpoints {
                    Some(eps) => eps.clone(),
                    None => {
                        let a1 = default_lsv_a1(kappa, self.p)?;
                        vec![a1]
                    }
                };
                IntervalMap::generalized_lsv(kappa, self.p, &interior)
            }
            FamilyTag::PerturbedPm => {
                let kappa = self.integer_kappa()?;
                let eps = self
                    .perturbation
                    .as_ref()
                    .map(|q| q.epsilon)
                    .unwrap_or(0.0);
                IntervalMap::perturbed_pm(kappa, self.p, polynomial_perturbation(eps, self.p))
            }
            FamilyTag::PerturbedLsv => {
                let kappa = self
                    .kappa
                    .ok_or_else(|| Error::Config("perturbed_lsv needs kappa".into()))?;
                let interior = match &self.endpoints {
                    Some(eps) => eps.clone(),
                    None => vec![default_lsv_a1(kappa, self.p)?],
                };
                let eps = self
                    .perturbation
                    .as_ref()
                    .map(|q| q.epsilon)
                    .unwrap_or(0.0);
                // Branch 0 stays unperturbed (so the a_1 relation holds);
                // each linear branch gets a concave bump vanishing at its
                // cell endpoints.
                let mut etas = vec![PerturbationSpec::zero()];
                let mut prev = interior[0];
                for &e in interior[1..].iter().chain(std::iter::once(&1.0)) {
                    etas.push(concave_bump(eps, prev, e));
                    prev = e;
                }
                IntervalMap::perturbed_lsv(kappa, self.p, &interior, etas)
            }
            FamilyTag::Custom => Err(Error::Config(
                "custom maps are constructed programmatically, not from JSON".into(),
            )),
        }
    }

    fn integer_kappa(&self) -> Result<u32> {
        let k = self
            .kappa
            .ok_or_else(|| Error::Config("kappa required".into()))?;
        if k < 1.0 || k.fract() != 0.0 || k > u32::MAX as f64 {
            return Err(Error::Config(format!(
                "kappa must be a positive integer for this family, got {k}"
            )));
        }
        Ok(k as u32)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("bad map spec: {e}")))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("map spec serializes")
    }
}

/// Concave quadratic bump `c (x - lo)(hi - x)` vanishing at both endpoints,
/// with `c` clipped so the branch stays increasing.
pub fn concave_bump(c: f64, lo: f64, hi: f64) -> PerturbationSpec {
    let len = (hi - lo).max(1e-12);
    let c = c.min(0.9 / (len * len));
    let eta: RealFn = Arc::new(move |x: f64| c * (x - lo) * (hi - x));
    let eta_prime: RealFn = Arc::new(move |x: f64| c * (lo + hi - 2.0 * x));
    let eta_second: RealFn = Arc::new(move |_x: f64| -2.0 * c);
    PerturbationSpec {
        eta,
        eta_prime,
        eta_second,
        epsilon: c,
    }
}

/// `a_1` solving `a + kappa a^{p+1} = 1`.
pub fn default_lsv_a1(kappa: f64, p: f64) -> Result<f64> {
    roots::invert_increasing(
        |x| x + kappa * x.powf(p + 1.0),
        |x| 1.0 + kappa * (p + 1.0) * x.powf(p),
        0.0,
        1.0,
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain bisection, independent of the library root finder.
    fn bisect_oracle(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn pm_endpoint_golden_ratio() {
        // kappa=1, p=1: a_1 solves x + x^2 = 1.
        let map = IntervalMap::generalized_pm(1, 1.0).unwrap();
        let oracle = bisect_oracle(|x| x + x * x, 0.0, 1.0, 1.0);
        assert!((map.endpoint(1).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.618_033_988_7).abs() < 1e-9);
    }

    #[test]
    fn pm_k2_p2_endpoint() {
        let map = IntervalMap::generalized_pm(2, 2.0).unwrap();
        let oracle = bisect_oracle(|x| x + 2.0 * x.powi(3), 0.0, 1.0, 1.0);
        assert!((map.endpoint(1).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.589_754_512_3).abs() < 1e-9);
    }

    #[test]
    fn pm_branch_count() {
        for kappa in 1..=3u32 {
            let map = IntervalMap::generalized_pm(kappa, 1.5).unwrap();
            assert_eq!(map.branch_count(), Some(kappa as usize + 1));
        }
    }

    #[test]
    fn lsv_standard_hits_one_at_half() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        assert!((map.eval(0.5).unwrap() - 1.0).abs() < 1e-15);
        // Second branch: T(3/4) = 1/2.
        assert!((map.eval(0.75).unwrap() - 0.5).abs() < 1e-15);
        for p in [1.0, 2.0, 3.0] {
            let m = IntervalMap::standard_lsv(p).unwrap();
            assert!((m.endpoint(1).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn lsv_endpoint_mismatch_is_reported() {
        let err = IntervalMap::generalized_lsv(2.0, 1.0, &[0.4]).unwrap_err();
        assert!(matches!(err, Error::EndpointMismatch { .. }), "{err}");
    }

    #[test]
    fn eval_map_examples() {
        let pm = IntervalMap::generalized_pm(1, 1.0).unwrap();
        assert!((pm.eval(0.25).unwrap() - 0.3125).abs() < 1e-15);
        assert!(pm.eval(0.0).is_err());
        assert!(pm.eval(1.0000001).is_err());
    }

    #[test]
    fn eval_decreases_to_identity_near_zero() {
        // T(x) - x is positive and decreasing to 0 on (0, b_o).
        let map = IntervalMap::standard_lsv(2.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in (1..=40).rev() {
            let x = map.b_o() * i as f64 / 40.0;
            let gap = map.eval(x).unwrap() - x;
            assert!(gap > 0.0);
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn inverse_branch_quadratic_oracle() {
        let pm = IntervalMap::generalized_pm(1, 1.0).unwrap();
        let x = pm.inverse_branch(0, 0.25).unwrap();
        let expected = (-1.0 + 2.0f64.sqrt()) / 2.0; // root of x + x^2 = 1/4
        assert!((x - expected).abs() < 1e-14);
        let d = pm.inverse_branch_derivative(0, 0.25).unwrap();
        assert!((d - 1.0 / (1.0 + 2.0 * expected)).abs() < 1e-13);
    }

    #[test]
    fn inverse_branch_linear() {
        let lsv = IntervalMap::standard_lsv(1.0).unwrap();
        assert!((lsv.inverse_branch(1, 0.0).unwrap() - 0.5).abs() < 1e-15);
        for i in 0..=10 {
            let xi = i as f64 / 10.0;
            let x = lsv.inverse_branch(1, xi).unwrap();
            assert!((x - (xi + 1.0) / 2.0).abs() < 1e-15);
            let d = lsv.inverse_branch_derivative(1, xi).unwrap();
            assert!((d - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn inverse_round_trip_all_families() {
        let maps = [
            IntervalMap::generalized_pm(2, 1.0).unwrap(),
            IntervalMap::generalized_pm(1, 3.0).unwrap(),
            IntervalMap::standard_lsv(2.0).unwrap(),
        ];
        for map in &maps {
            let n = map.branch_count().unwrap();
            for j in 0..n {
                for i in 1..=100 {
                    let xi = i as f64 / 100.0;
                    let x = map.inverse_branch(j, xi).unwrap();
                    let back = map.branch(j).unwrap().eval(x);
                    assert!(
                        (back - xi).abs() <= 1e-12,
                        "family {:?} branch {j}: |T(psi({xi})) - {xi}| = {:.2e}",
                        map.family(),
                        (back - xi).abs()
                    );
                    let d = map.inverse_branch_derivative(j, xi).unwrap();
                    let chain = d * map.branch(j).unwrap().deriv(x);
                    assert!((chain - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pm_matches_closed_formula() {
        for kappa in 1..=3u32 {
            for p in [1.0, 2.0, 3.0] {
                let map = IntervalMap::generalized_pm(kappa, p).unwrap();
                for i in 1..=2500 {
                    let x = i as f64 / 2500.0;
                    let direct = x + kappa as f64 * x.powf(p + 1.0);
                    let expected = if x == 1.0 {
                        1.0
                    } else {
                        direct - direct.floor()
                    };
                    let got = map.eval(x).unwrap();
                    // Both sides compute x + k x^{p+1} the same way, so the
                    // only slack is the subtraction of the branch index.
                    assert!(
                        (got - expected).abs() <= 1e-15 || (got - expected).abs() >= 1.0 - 1e-12,
                        "kappa={kappa} p={p} x={x}: {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn orbit_examples() {
        let lsv = IntervalMap::standard_lsv(1.0).unwrap();
        let orb = lsv.orbit(0.75, 2).unwrap();
        assert_eq!(orb.len(), 3);
        assert!((orb[1] - 0.5).abs() < 1e-15);
        assert!((orb[2] - 1.0).abs() < 1e-15);
        assert_eq!(lsv.orbit(0.3, 0).unwrap(), vec![0.3]);
        // Orbit from a_1 hits 1 after one step in any family.
        let pm = IntervalMap::generalized_pm(2, 2.0).unwrap();
        let a1 = pm.endpoint(1).unwrap();
        let orb = pm.orbit(a1, 1).unwrap();
        assert!((orb[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn countable_lsv_basics() {
        // a_j = 1 - 2^-j for j >= 1.
        let map = IntervalMap::lsv_countable(
            1.0,
            Arc::new(|j| if j == 0 { 0.0 } else { 1.0 - 0.5f64.powi(j as i32) }),
        )
        .unwrap();
        assert_eq!(map.branch_count(), None);
        assert!((map.kappa() - 2.0).abs() < 1e-12);
        // Locate deep cells.
        let j = map.locate(1.0 - 1e-4).unwrap();
        assert!(j >= 12);
        let x = map.inverse_branch(5, 0.5).unwrap();
        let b = map.branch(5).unwrap();
        assert!(x > b.lower && x <= b.upper);
    }

    #[test]
    fn map_spec_round_trip() {
        let spec = MapSpec {
            family: FamilyTag::GeneralizedLsv,
            kappa: Some(2.0),
            p: 1.0,
            endpoints: None,
            perturbation: None,
        };
        let map = spec.build().unwrap();
        assert!((map.endpoint(1).unwrap() - 0.5).abs() < 1e-12);
        let json = spec.to_json_string();
        let spec2 = MapSpec::from_json_str(&json).unwrap();
        let map2 = spec2.build().unwrap();
        assert_eq!(map.branch_count(), map2.branch_count());
    }

    #[test]
    fn perturbed_pm_builds_and_validates() {
        let eta = polynomial_perturbation(1e-3, 1.0);
        let map = IntervalMap::perturbed_pm(1, 1.0, eta).unwrap();
        assert_eq!(map.family(), FamilyTag::PerturbedPm);
        // Endpoint shifted slightly off the unperturbed value.
        let a1 = map.endpoint(1).unwrap();
        assert!((a1 - 0.618).abs() < 5e-3);
        let x = map.inverse_branch(0, 0.7).unwrap();
        assert!((map.branch(0).unwrap().eval(x) - 0.7).abs() < 1e-12);
    }
}
