//! Global-local mixing experiments: correlation sequences
//! `nu((F o T^n) g)` computed by transfer-operator duality and by
//! Monte-Carlo, decay diagnostics, local-local decay, and the
//! counterexample table of averages.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::counterexample;
use crate::error::{Error, Result};
use crate::grid::{halfline_grid, interval_grid, GridFunction};
use crate::halfline::{conjugate, to_halfline, to_interval};
use crate::map::IntervalMap;
use crate::measure::{
    default_box_sequence, estimate_global_average, integrate_observable, MeasureKind, MeasureSpec,
    Space,
};
use crate::observable::{Observable, Role};
use crate::quad::{self, QuadOptions};
use crate::transfer::{transfer_pow_exact, GridOperator, TransferSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TransferDuality,
    MonteCarlo,
}

/// How the dual path evaluates `P^n`.
#[derive(Clone, Copy, Debug)]
pub enum PfMode {
    /// Recursive branch-word evaluation plus adaptive quadrature; cost
    /// grows like `N^n`, accuracy limited only by quadrature tolerance.
    Exact,
    /// Precomputed grid operator; the production path for long runs.
    Grid { points: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct CorrelationOptions {
    pub mode: PfMode,
    pub tol: f64,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            mode: PfMode::Grid { points: 20_000 },
            tol: 1e-8,
        }
    }
}

/// A completed correlation experiment.
#[derive(Clone, Debug, Serialize)]
pub struct MixingRun {
    pub map_id: String,
    pub measure_name: String,
    pub f_name: String,
    pub g_name: String,
    pub n_max: usize,
    pub correlations: Vec<f64>,
    /// Standard errors (Monte-Carlo only).
    pub se: Option<Vec<f64>>,
    /// `avg(F) * nu(g)`; absent when the infinite-volume average of `F`
    /// did not converge (the run is then tagged target-undefined rather
    /// than carrying a fabricated number).
    pub target: Option<f64>,
    pub method: Method,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decaying,
    Flat,
    Increasing,
}

#[derive(Clone, Debug, Serialize)]
pub struct GlmDiagnostic {
    /// `max_{n > n_max/2} |c_n - target|` (target 0 when undefined).
    pub tail_sup: f64,
    pub trend: Trend,
    /// Least-squares slope of `log |c_n - target|` over the tail.
    pub slope: f64,
    pub target_undefined: bool,
}

/// Where the evolved density lives for a given measure.
enum DualSide {
    /// Evolve on the half-line against Lebesgue; observables are
    /// transported through the conjugation when the measure is the
    /// interval-side `x^{-p-1}` one.
    HalfLine {
        f_o: Observable,
        u0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        u0_cuts: Vec<f64>,
    },
    /// Evolve on the interval against Lebesgue with `u0 = g h_nu`.
    Interval {
        f_i: Observable,
        u0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        u0_cuts: Vec<f64>,
    },
}

/// Transports an interval observable to the half-line through the
/// conjugation (`F_o = F o Psi^{-1}`), carrying breakpoints along.
pub fn transport_to_halfline(obs: &Observable, p: f64) -> Observable {
    let inner = obs.clone();
    let f = move |y: f64| inner.eval(to_interval(y, p).unwrap_or(0.0));
    let inner = obs.clone();
    let brk = move |lo: f64, hi: f64| -> Vec<f64> {
        let x_hi = to_interval(lo, p).unwrap_or(1.0);
        let x_lo = to_interval(hi, p).unwrap_or(1e-300);
        let mut out: Vec<f64> = inner
            .breakpoints_in(x_lo, x_hi)
            .into_iter()
            .filter_map(|c| to_halfline(c, p).ok())
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    };
    let mut out = Observable::from_fn(
        &format!("{}∘conj", obs.name),
        obs.role,
        Arc::new(f),
        obs.bound,
    )
    .with_breakpoints(Arc::new(brk));
    if let Some((lo, hi)) = obs.support {
        let y_hi = if lo > 0.0 {
            to_halfline(lo, p).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        let y_lo = to_halfline(hi.min(1.0), p).unwrap_or(0.0);
        out = out.with_support(y_lo, y_hi);
    }
    out.known_average = obs.known_average;
    out
}

fn dual_side(
    map: &IntervalMap,
    measure: &MeasureSpec,
    f_glob: &Observable,
    g_loc: &Observable,
) -> Result<DualSide> {
    match (&measure.kind, measure.space) {
        (MeasureKind::NuP { p }, Space::UnitInterval) => {
            let p = *p;
            if (p - map.p()).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "measure exponent {p} does not match the map index {}",
                    map.p()
                )));
            }
            let f_o = transport_to_halfline(f_glob, p);
            let g_o = transport_to_halfline(g_loc, p);
            let cuts = g_o.breakpoints_in(0.0, f64::INFINITY.min(1e300));
            let g_fn = g_o.eval_fn();
            Ok(DualSide::HalfLine {
                f_o,
                u0: g_fn,
                u0_cuts: cuts,
            })
        }
        (MeasureKind::Lebesgue, Space::HalfLine) => {
            let cuts = g_loc.breakpoints_in(0.0, 1e300);
            Ok(DualSide::HalfLine {
                f_o: f_glob.clone(),
                u0: g_loc.eval_fn(),
                u0_cuts: cuts,
            })
        }
        (MeasureKind::LambdaQ { q }, Space::HalfLine) => {
            let q = *q;
            let g_fn = g_loc.eval_fn();
            let u0 = move |y: f64| g_fn(y) * (1.0 + y).powf(-q);
            let cuts = g_loc.breakpoints_in(0.0, 1e300);
            Ok(DualSide::HalfLine {
                f_o: f_glob.clone(),
                u0: Arc::new(u0),
                u0_cuts: cuts,
            })
        }
        (MeasureKind::EstimatedMu { density }, Space::UnitInterval) => {
            let d = density.clone();
            let g_fn = g_loc.eval_fn();
            let u0 = move |x: f64| g_fn(x) * d.eval(x);
            let cuts = g_loc.breakpoints_in(0.0, 1.0);
            Ok(DualSide::Interval {
                f_i: f_glob.clone(),
                u0: Arc::new(u0),
                u0_cuts: cuts,
            })
        }
        _ => Err(Error::Config(
            "unsupported measure/space combination for correlation runs".into(),
        )),
    }
}

/// `nu(g)` over the whole space (support-aware).
pub fn local_mass(measure: &MeasureSpec, g_loc: &Observable) -> Result<f64> {
    let (lo, hi) = match measure.space {
        Space::UnitInterval => {
            let (slo, shi) = g_loc.support.unwrap_or((0.0, 1.0));
            (slo.max(0.0), shi.min(1.0))
        }
        Space::HalfLine => match g_loc.support {
            Some((slo, shi)) if shi.is_finite() => (slo.max(0.0), shi),
            _ => {
                return Err(Error::NonIntegrable(
                    "local observable needs bounded support on the half-line".into(),
                ))
            }
        },
    };
    integrate_observable(measure, g_loc, lo, hi, 1e-10)
}

/// Infinite-volume average of `F`, from its declared value or estimated
/// along the default dyadic box sequence. `None` when the estimate does
/// not converge.
pub fn target_average(measure: &MeasureSpec, f_glob: &Observable) -> Result<Option<f64>> {
    if let Some(v) = f_glob.known_average {
        return Ok(Some(v));
    }
    let seq = default_box_sequence(measure.space, 30);
    let est = estimate_global_average(measure, f_glob, &seq, 1e-6)?;
    Ok(if est.converged { Some(est.value) } else { None })
}

/// Correlations `c_n = nu((F o T^n) g)` for `n = 0..=n_max` by duality:
/// the evolved object is `P^n` applied to `g` times the measure density,
/// integrated against `F` with respect to Lebesgue on the dual side.
pub fn correlation_transfer(
    map: &IntervalMap,
    measure: &MeasureSpec,
    f_glob: &Observable,
    g_loc: &Observable,
    n_max: usize,
    opts: CorrelationOptions,
) -> Result<Vec<f64>> {
    let side = dual_side(map, measure, f_glob, g_loc)?;
    match side {
        DualSide::HalfLine { f_o, u0, u0_cuts } => {
            let hmap = conjugate(map)?;
            match opts.mode {
                PfMode::Grid { points } => {
                    let grid = halfline_grid(points, 1e-6, hmap.y_max());
                    let op = GridOperator::new(&hmap, grid.clone())?;
                    let mut u =
                        GridFunction::from_fn(grid.clone(), Space::HalfLine, |y| u0(y))?;
                    let mut out = Vec::with_capacity(n_max + 1);
                    let f_cuts = f_o.breakpoints_in(0.0, *grid.last().unwrap());
                    for n in 0..=n_max {
                        let mut cuts = f_cuts.clone();
                        if n == 0 {
                            cuts.extend_from_slice(&u0_cuts);
                        }
                        out.push(u.integrate_against(|y| f_o.eval(y), &cuts));
                        if n < n_max {
                            u = op.apply(&u)?;
                        }
                    }
                    Ok(out)
                }
                PfMode::Exact => {
                    exact_correlations(&hmap, &f_o, u0.as_ref(), &u0_cuts, n_max, opts.tol)
                }
            }
        }
        DualSide::Interval { f_i, u0, u0_cuts } => match opts.mode {
            PfMode::Grid { points } => {
                let grid = interval_grid(points, 1e-9);
                let op = GridOperator::new(map, grid.clone())?;
                let mut u = GridFunction::from_fn(grid.clone(), Space::UnitInterval, |x| u0(x))?;
                let mut out = Vec::with_capacity(n_max + 1);
                let f_cuts = f_i.breakpoints_in(0.0, 1.0);
                for n in 0..=n_max {
                    let mut cuts = f_cuts.clone();
                    if n == 0 {
                        cuts.extend_from_slice(&u0_cuts);
                    }
                    out.push(u.integrate_against(|x| f_i.eval(x), &cuts));
                    if n < n_max {
                        u = op.apply(&u)?;
                    }
                }
                Ok(out)
            }
            PfMode::Exact => exact_correlations(map, &f_i, u0.as_ref(), &u0_cuts, n_max, opts.tol),
        },
    }
}

fn exact_correlations<S: TransferSystem + ?Sized>(
    sys: &S,
    f_obs: &Observable,
    u0: &(dyn Fn(f64) -> f64 + Send + Sync),
    u0_cuts: &[f64],
    n_max: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_max + 1);
    let opts = QuadOptions {
        rel_tol: tol,
        abs_floor: 1e-12,
        max_segments: 200_000,
    };
    for n in 0..=n_max {
        let integrand = |y: f64| f_obs.eval(y) * transfer_pow_exact(sys, &|x| u0(x), n, y).unwrap();
        let v = match sys.space() {
            Space::UnitInterval => {
                let mut cuts = f_obs.breakpoints_in(0.0, 1.0);
                if n == 0 {
                    cuts.extend_from_slice(u0_cuts);
                }
                let mut lo = 1e-9;
                let mut acc = 0.0;
                // Geometric panels toward 0 keep the adaptive rule away
                // from the steep corner at the origin.
                for hi in [1e-6, 1e-3, 1.0] {
                    acc += quad::adaptive_with_cuts(&integrand, lo, hi, &cuts, opts)?;
                    lo = hi;
                }
                acc
            }
            Space::HalfLine => {
                let mut cuts = f_obs.breakpoints_in(0.0, 64.0);
                if n == 0 {
                    cuts.extend_from_slice(u0_cuts);
                }
                let head = quad::adaptive_with_cuts(&integrand, 0.0, 64.0, &cuts, opts)?;
                let tail = quad::adaptive_to_infinity(&integrand, 64.0, 64.0, opts)?;
                head + tail
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// Monte-Carlo correlations: draws `x ~ g dnu / nu(g)` by inverse CDF on
/// a fine grid, pushes orbits forward, and averages `F`. Signed `g` is
/// split into positive and negative parts. Deterministic for a fixed
/// seed: samples are generated in fixed-size blocks with per-block
/// generators and merged in block order, so results do not depend on the
/// thread count.
pub fn correlation_montecarlo(
    map: &IntervalMap,
    measure: &MeasureSpec,
    f_glob: &Observable,
    g_loc: &Observable,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let g_fn = g_loc.eval_fn();
    let gp_fn = g_fn.clone();
    let g_plus = Observable::from_fn(
        &format!("{}+", g_loc.name),
        Role::Local,
        Arc::new(move |x| gp_fn(x).max(0.0)),
        g_loc.bound,
    );
    let gm_fn = g_fn.clone();
    let g_minus = Observable::from_fn(
        &format!("{}-", g_loc.name),
        Role::Local,
        Arc::new(move |x| (-gm_fn(x)).max(0.0)),
        g_loc.bound,
    );
    let support = g_loc
        .support
        .ok_or_else(|| Error::Sampling("local observable needs a declared support".into()))?;
    let mass_plus = {
        let mut o = g_plus.clone();
        o.support = Some(support);
        local_mass(measure, &o)?
    };
    let mass_minus = {
        let mut o = g_minus.clone();
        o.support = Some(support);
        local_mass(measure, &o)?
    };

    let mut c = vec![0.0; n_max + 1];
    let mut var = vec![0.0; n_max + 1];
    for (part, mass, sign, salt) in [
        (&g_plus, mass_plus, 1.0, 0u64),
        (&g_minus, mass_minus, -1.0, 0x9e37),
    ] {
        if mass <= 1e-14 {
            continue;
        }
        let (means, vars) = mc_part(
            map,
            measure,
            f_glob,
            part,
            support,
            n_max,
            samples,
            seed ^ salt,
        )?;
        for n in 0..=n_max {
            c[n] += sign * mass * means[n];
            var[n] += (mass * mass) * vars[n] / samples as f64;
        }
    }
    let se = var.iter().map(|v| v.sqrt()).collect();
    Ok((c, se))
}

const MC_BLOCK: usize = 4096;

#[allow(clippy::too_many_arguments)]
fn mc_part(
    map: &IntervalMap,
    measure: &MeasureSpec,
    f_glob: &Observable,
    g_part: &Observable,
    support: (f64, f64),
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    // Inverse CDF of g * density on the support, on a fine grid.
    let (lo, hi) = support;
    let n_cdf = 1 << 16;
    let mut xs = Vec::with_capacity(n_cdf + 1);
    let mut cdf = Vec::with_capacity(n_cdf + 1);
    let mut acc = 0.0;
    let mut prev_w = g_part.eval(lo) * measure.density(lo);
    xs.push(lo);
    cdf.push(0.0);
    for i in 1..=n_cdf {
        let x = lo + (hi - lo) * i as f64 / n_cdf as f64;
        let w = g_part.eval(x) * measure.density(x);
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Sampling(format!(
                "non-finite or negative sampling weight at {x}"
            )));
        }
        acc += 0.5 * (hi - lo) / n_cdf as f64 * (prev_w + w);
        xs.push(x);
        cdf.push(acc);
        prev_w = w;
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::Sampling("sampling density has zero mass".into()));
    }
    for v in &mut cdf {
        *v /= total;
    }

    let invert = move |u: f64| -> f64 {
        let i = cdf.partition_point(|&c| c < u).clamp(1, n_cdf);
        let (c0, c1) = (cdf[i - 1], cdf[i]);
        if c1 <= c0 {
            return xs[i];
        }
        let t = (u - c0) / (c1 - c0);
        xs[i - 1] + t * (xs[i] - xs[i - 1])
    };

    // Orbits run on the half-line for half-line measures.
    let halfline = measure.space == Space::HalfLine;
    let hmap = if halfline { Some(conjugate(map)?) } else { None };

    let n_blocks = samples.div_ceil(MC_BLOCK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(seed.wrapping_add((b as u64).wrapping_mul(0x9E3779B97F4A7C15)));
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut sum = vec![0.0; n_max + 1];
            let mut sum2 = vec![0.0; n_max + 1];
            for _ in 0..count {
                let u: f64 = rng.gen();
                let mut x = invert(u);
                for n in 0..=n_max {
                    let fx = f_glob.eval(x);
                    sum[n] += fx;
                    sum2[n] += fx * fx;
                    if n < n_max {
                        x = match &hmap {
                            Some(h) => h.eval(x).unwrap_or(f64::INFINITY),
                            None => map.eval(x).unwrap_or(1.0),
                        };
                    }
                }
            }
            (sum, sum2)
        })
        .collect();

    let mut means = vec![0.0; n_max + 1];
    let mut vars = vec![0.0; n_max + 1];
    let s = samples as f64;
    for n in 0..=n_max {
        let total: f64 = partials.iter().map(|p| p.0[n]).sum();
        let total2: f64 = partials.iter().map(|p| p.1[n]).sum();
        let mean = total / s;
        means[n] = mean;
        vars[n] = ((total2 - s * mean * mean) / (s - 1.0)).max(0.0);
    }
    Ok((means, vars))
}

/// Classifies the residual trend of a completed run.
pub fn glm_diagnostic(run: &MixingRun) -> GlmDiagnostic {
    let target = run.target.unwrap_or(0.0);
    let tail_start = run.n_max / 2 + 1;
    let resid: Vec<(f64, f64)> = run
        .correlations
        .iter()
        .enumerate()
        .skip(tail_start)
        .map(|(n, &c)| (n as f64, (c - target).abs()))
        .collect();
    let tail_sup = resid.iter().map(|r| r.1).fold(0.0, f64::max);
    let scale = run
        .correlations
        .iter()
        .map(|c| c.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    if tail_sup <= 1e-12 * scale.max(1.0) {
        return GlmDiagnostic {
            tail_sup,
            trend: Trend::Flat,
            slope: 0.0,
            target_undefined: run.target.is_none(),
        };
    }
    let pts: Vec<(f64, f64)> = resid
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|r| (r.0, r.1.ln()))
        .collect();
    let slope = slope_of(&pts);
    let trend = if slope < -1e-3 {
        Trend::Decaying
    } else if slope > 1e-3 {
        Trend::Increasing
    } else {
        Trend::Flat
    };
    GlmDiagnostic {
        tail_sup,
        trend,
        slope,
        target_undefined: run.target.is_none(),
    }
}

fn slope_of(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecaySummary {
    pub magnitudes: Vec<f64>,
    /// `envelope[i] = max_{j >= i} |c_j|`.
    pub envelope: Vec<f64>,
    pub decayed: bool,
}

/// Local-local decay: `|nu((f o T^n) g)|` for bounded integrable `f`,
/// with a monotone-envelope summary.
pub fn local_local_decay(
    map: &IntervalMap,
    measure: &MeasureSpec,
    f_loc: &Observable,
    g_loc: &Observable,
    n_max: usize,
    opts: CorrelationOptions,
) -> Result<DecaySummary> {
    let c = correlation_transfer(map, measure, f_loc, g_loc, n_max, opts)?;
    let magnitudes: Vec<f64> = c.iter().map(|v| v.abs()).collect();
    let mut envelope = magnitudes.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let decayed = envelope.last().copied().unwrap_or(0.0)
        <= 0.5 * envelope.first().copied().unwrap_or(0.0);
    Ok(DecaySummary {
        magnitudes,
        envelope,
        decayed,
    })
}

/// One row of the counterexample table: the four closed-form averages
/// plus quadrature cross-checks where the block edges are exactly
/// representable (small `n`).
#[derive(Clone, Debug, Serialize)]
pub struct DemoRow {
    pub n: u64,
    pub leb_at_alpha: f64,
    pub leb_at_beta: f64,
    pub lambda1_at_alpha: f64,
    pub lambda1_at_beta: f64,
    pub leb_alpha_quad: Option<f64>,
    pub lambda1_alpha_quad: Option<f64>,
}

/// Cross-checks run while `beta_n` stays in the exact-integer range of
/// f64.
pub const DEMO_QUAD_MAX_N: u64 = 13;

/// Emits rows `n = 2..=n_max` of the counterexample averages. The
/// Lebesgue column at the second subsequence stays at or above 1/2 while
/// both density-weighted columns decay like `1/log n`.
pub fn counterexample_demo(n_max: u64) -> Result<Vec<DemoRow>> {
    let opts = QuadOptions::with_rel_tol(1e-11);
    let mut rows = Vec::new();
    for n in 2..=n_max {
        let avg = counterexample::averages(n)?;
        let (mut leb_q, mut l1_q) = (None, None);
        if n <= DEMO_QUAD_MAX_N {
            let a_n = counterexample::alpha(n);
            let mut leb_sum = 0.0;
            let mut l1_sum = 0.0;
            for k in 1..n {
                let (ak, bk) = (counterexample::alpha(k), counterexample::beta(k));
                leb_sum += quad::adaptive(&|_| 1.0, ak, bk, opts)?;
                l1_sum += quad::adaptive(&|y: f64| 1.0 / (1.0 + y), ak, bk, opts)?;
            }
            leb_q = Some(leb_sum / a_n);
            l1_q = Some(l1_sum / (1.0 + a_n).ln());
        }
        rows.push(DemoRow {
            n,
            leb_at_alpha: avg.leb_at_alpha,
            leb_at_beta: avg.leb_at_beta,
            lambda1_at_alpha: avg.lambda1_at_alpha,
            lambda1_at_beta: avg.lambda1_at_beta,
            leb_alpha_quad: leb_q,
            lambda1_alpha_quad: l1_q,
        });
    }
    Ok(rows)
}

/// Builds the run record for the transfer path.
#[allow(clippy::too_many_arguments)]
pub fn run_transfer(
    map: &IntervalMap,
    map_id: &str,
    measure: &MeasureSpec,
    measure_name: &str,
    f_glob: &Observable,
    g_loc: &Observable,
    n_max: usize,
    opts: CorrelationOptions,
) -> Result<MixingRun> {
    let correlations = correlation_transfer(map, measure, f_glob, g_loc, n_max, opts)?;
    let target = match target_average(measure, f_glob)? {
        Some(avg) => Some(avg * local_mass(measure, g_loc)?),
        None => None,
    };
    Ok(MixingRun {
        map_id: map_id.to_string(),
        measure_name: measure_name.to_string(),
        f_name: f_glob.name.clone(),
        g_name: g_loc.name.clone(),
        n_max,
        correlations,
        se: None,
        target,
        method: Method::TransferDuality,
        mc_samples: None,
        seed: None,
    })
}

/// Builds the run record for the Monte-Carlo path.
#[allow(clippy::too_many_arguments)]
pub fn run_montecarlo(
    map: &IntervalMap,
    map_id: &str,
    measure: &MeasureSpec,
    measure_name: &str,
    f_glob: &Observable,
    g_loc: &Observable,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<MixingRun> {
    let (correlations, se) =
        correlation_montecarlo(map, measure, f_glob, g_loc, n_max, samples, seed)?;
    let target = match target_average(measure, f_glob)? {
        Some(avg) => Some(avg * local_mass(measure, g_loc)?),
        None => None,
    };
    Ok(MixingRun {
        map_id: map_id.to_string(),
        measure_name: measure_name.to_string(),
        f_name: f_glob.name.clone(),
        g_name: g_loc.name.clone(),
        n_max,
        correlations,
        se: Some(se),
        target,
        method: Method::MonteCarlo,
        mc_samples: Some(samples),
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_f_gives_flat_run() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let nu = MeasureSpec::nu_p(1.0);
        let f = Observable::constant(2.0);
        let g = Observable::box_indicator(0.5, 1.0).unwrap();
        let run =
            run_transfer(&map, "lsv_p1", &nu, "nu_p", &f, &g, 8, CorrelationOptions::default())
                .unwrap();
        // nu(g) = int_{1/2}^1 x^-2 = 1; target = 2.
        let target = run.target.unwrap();
        assert!((target - 2.0).abs() < 1e-6, "target {target}");
        for (n, c) in run.correlations.iter().enumerate() {
            assert!((c - 2.0).abs() < 5e-3, "n={n}: {c}");
        }
        let diag = glm_diagnostic(&run);
        assert!(diag.tail_sup < 5e-3);
    }

    #[test]
    fn zero_f_gives_zero_correlations() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let nu = MeasureSpec::nu_p(1.0);
        let f = Observable::constant(0.0);
        let g = Observable::box_indicator(0.5, 1.0).unwrap();
        let c = correlation_transfer(&map, &nu, &f, &g, 5, CorrelationOptions::default()).unwrap();
        for v in c {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn mc_constant_observable_no_variance() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let nu = MeasureSpec::nu_p(1.0);
        let f = Observable::constant(3.0);
        let g = Observable::box_indicator(0.5, 1.0).unwrap();
        let (c, se) = correlation_montecarlo(&map, &nu, &f, &g, 3, 2000, 7).unwrap();
        for n in 0..=3 {
            assert!((c[n] - 3.0).abs() < 1e-3, "c[{n}] = {}", c[n]);
            assert!(se[n] < 1e-12);
        }
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let map = IntervalMap::standard_lsv(1.0).unwrap();
        let nu = MeasureSpec::nu_p(1.0);
        let f = Observable::identity(Space::UnitInterval).unwrap();
        let g = Observable::box_indicator(0.5, 1.0).unwrap();
        let (c1, _) = correlation_montecarlo(&map, &nu, &f, &g, 5, 10_000, 42).unwrap();
        let (c2, _) = correlation_montecarlo(&map, &nu, &f, &g, 5, 10_000, 42).unwrap();
        assert_eq!(c1, c2);
        let (c3, _) = correlation_montecarlo(&map, &nu, &f, &g, 5, 10_000, 43).unwrap();
        assert_ne!(c1, c3);
    }

    #[test]
    fn demo_rows_match_quadrature() {
        let rows = counterexample_demo(12).unwrap();
        assert_eq!(rows.len(), 11);
        for r in &rows {
            assert!(r.leb_at_beta >= 0.5);
            if let (Some(lq), Some(l1q)) = (r.leb_alpha_quad, r.lambda1_alpha_quad) {
                assert!(
                    (lq - r.leb_at_alpha).abs() <= 1e-9 * r.leb_at_alpha.max(1e-9),
                    "n={}: {lq} vs {}",
                    r.n,
                    r.leb_at_alpha
                );
                assert!(
                    (l1q - r.lambda1_at_alpha).abs() <= 1e-9 * r.lambda1_at_alpha.max(1e-9),
                    "n={}",
                    r.n
                );
            }
        }
    }

    #[test]
    fn counterexample_averages_disagree_under_length_weighting() {
        // Merged box sequence alpha_2, beta_2, ..., alpha_8, beta_8 under
        // Lebesgue on the half-line: two distinct cluster values, so the
        // estimate must not converge.
        let leb = MeasureSpec::lebesgue(Space::HalfLine);
        let f = Observable::counterexample_kk();
        let mut seq = Vec::new();
        for n in 2..=8u64 {
            seq.push(counterexample::alpha(n));
            seq.push(counterexample::beta(n));
        }
        let est = estimate_global_average(&leb, &f, &seq, 1e-3).unwrap();
        assert!(!est.converged);
        let alpha_val = est.trace[est.trace.len() - 2].1;
        let beta_val = est.trace[est.trace.len() - 1].1;
        assert!(alpha_val < 0.1, "alpha cluster {alpha_val}");
        assert!(beta_val >= 0.5, "beta cluster {beta_val}");
    }

    #[test]
    fn counterexample_converges_under_density_weighting() {
        let l1 = MeasureSpec::lambda_q(1.0).unwrap();
        let f = Observable::counterexample_kk();
        let mut seq = Vec::new();
        for n in 2..=10u64 {
            seq.push(counterexample::alpha(n));
            seq.push(counterexample::beta(n));
        }
        let est = estimate_global_average(&l1, &f, &seq, 0.2).unwrap();
        // Slow 1/log n decay: generous tolerance, but the values must
        // shrink and agree with the closed forms.
        let avg10 = counterexample::averages(10).unwrap();
        let last = est.trace.last().unwrap().1;
        assert!(
            (last - avg10.lambda1_at_beta).abs() < 1e-6,
            "{last} vs {}",
            avg10.lambda1_at_beta
        );
        assert!(est.trace.last().unwrap().1 < est.trace[0].1);
    }
}
