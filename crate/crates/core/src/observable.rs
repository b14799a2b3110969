//! Observables: bounded functions with an infinite-volume average
//! (global) and integrable functions (local), plus the small expression
//! language used by the CLI.

use std::sync::Arc;

use crate::counterexample;
use crate::error::{Error, Result};
use crate::measure::Space;

pub type ObsFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type BreakpointsFn = Arc<dyn Fn(f64, f64) -> Vec<f64> + Send + Sync>;
type BreakFn = BreakpointsFn;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Global,
    Local,
}

/// A real observable on the interval or the half-line.
///
/// `bound` is an essential-sup bound (meaningful for global observables);
/// `known_average` short-circuits average estimation when the
/// infinite-volume average is analytically known; `support` encloses the
/// support of compactly supported observables (used by the Monte-Carlo
/// sampler); `breakpoints` enumerates jump locations inside a range so
/// quadrature can pre-split.
#[derive(Clone)]
pub struct Observable {
    pub role: Role,
    eval: ObsFn,
    pub bound: f64,
    pub known_average: Option<f64>,
    pub support: Option<(f64, f64)>,
    breakpoints: Option<BreakFn>,
    pub name: String,
}

impl Observable {
    pub fn from_fn(name: &str, role: Role, eval: ObsFn, bound: f64) -> Self {
        Observable {
            role,
            eval,
            bound,
            known_average: None,
            support: None,
            breakpoints: None,
            name: name.to_string(),
        }
    }

    pub fn with_known_average(mut self, avg: f64) -> Self {
        self.known_average = Some(avg);
        self
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = Some((lo, hi));
        self
    }

    pub fn with_breakpoints(mut self, f: BreakpointsFn) -> Self {
        self.breakpoints = Some(f);
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn eval_fn(&self) -> ObsFn {
        self.eval.clone()
    }

    /// Jump locations inside `(a, b)`, empty when none are declared.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        match &self.breakpoints {
            Some(f) => f(a, b),
            None => Vec::new(),
        }
    }

    /// `F == c`. Constant observables are global on infinite spaces.
    pub fn constant(c: f64) -> Self {
        let f: ObsFn = Arc::new(move |_| c);
        Observable::from_fn(&format!("constant:{c}"), Role::Global, f, c.abs())
            .with_known_average(c)
    }

    /// `F(x) = x`. Bounded (hence admissible as global) only on the
    /// unit interval.
    pub fn identity(space: Space) -> Result<Self> {
        if space == Space::HalfLine {
            return Err(Error::Config(
                "identity is unbounded on the half-line; not a global observable".into(),
            ));
        }
        let f: ObsFn = Arc::new(|x| x);
        Ok(Observable::from_fn("identity", Role::Global, f, 1.0))
    }

    /// Indicator of `[a, b]`, usable as a local observable.
    pub fn box_indicator(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Config(format!("empty box [{a}, {b}]")));
        }
        let f: ObsFn = Arc::new(move |x| if x >= a && x <= b { 1.0 } else { 0.0 });
        let brk: BreakFn = Arc::new(move |lo, hi| {
            [a, b].iter().copied().filter(|c| *c > lo && *c < hi).collect()
        });
        let mut obs = Observable::from_fn(&format!("box:{a},{b}"), Role::Local, f, 1.0)
            .with_support(a, b);
        obs.breakpoints = Some(brk);
        Ok(obs)
    }

    /// The bounded 0/1 observable on the half-line that takes value 1 on
    /// the blocks `[k^k - 1, 2 k^k - 1)`. It has a density-weighted
    /// average (under `(1+y)^{-1} dy`) but no length-weighted one.
    pub fn counterexample_kk() -> Self {
        let f: ObsFn = Arc::new(|y| counterexample::indicator(y) as u8 as f64);
        let brk: BreakFn = Arc::new(|lo, hi| counterexample::block_edges_in(lo, hi));
        let mut obs = Observable::from_fn("counterexample_kk", Role::Global, f, 1.0);
        obs.breakpoints = Some(brk);
        obs
    }

    /// Piecewise-constant observable from `(breakpoint, value)` rows.
    ///
    /// The value applies from its breakpoint (inclusive) to the next one
    /// (exclusive); the last value extends to the end of the space and
    /// the value before the first breakpoint is 0.
    pub fn piecewise_constant(rows: Vec<(f64, f64)>, role: Role) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("empty table".into()));
        }
        for w in rows.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::Config(format!(
                    "table breakpoints not increasing near {}",
                    w[0].0
                )));
            }
        }
        let bound = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
        let table = Arc::new(rows);
        let t = table.clone();
        let f: ObsFn = Arc::new(move |x| {
            let idx = t.partition_point(|r| r.0 <= x);
            if idx == 0 {
                0.0
            } else {
                t[idx - 1].1
            }
        });
        let t = table.clone();
        let brk: BreakFn = Arc::new(move |lo, hi| {
            t.iter()
                .map(|r| r.0)
                .filter(|c| *c > lo && *c < hi)
                .collect()
        });
        let support = (table[0].0, f64::INFINITY);
        let mut obs = Observable::from_fn("table", role, f, bound);
        obs.breakpoints = Some(brk);
        obs.support = Some(support);
        Ok(obs)
    }

    /// Parses piecewise-constant CSV with header `breakpoint,value`.
    pub fn from_table_csv(text: &str, role: Role) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("breakpoint")) {
                continue;
            }
            let mut parts = line.split(',');
            let b: f64 = parts
                .next()
                .ok_or_else(|| Error::Config(format!("line {i}: missing breakpoint")))?
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {i}: bad breakpoint")))?;
            let v: f64 = parts
                .next()
                .ok_or_else(|| Error::Config(format!("line {i}: missing value")))?
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {i}: bad value")))?;
            rows.push((b, v));
        }
        Self::piecewise_constant(rows, role)
    }

    /// CLI expression language:
    /// `identity | constant:c | box:a,b | counterexample_kk | table:path`.
    pub fn parse(expr: &str, role: Role, space: Space) -> Result<Self> {
        let mut obs = if expr == "identity" {
            let o = Observable::identity(space)?;
            if role == Role::Local {
                return Err(Error::Config(
                    "identity is not integrable against the measures in use; not a local observable"
                        .into(),
                ));
            }
            o
        } else if expr == "counterexample_kk" {
            if space != Space::HalfLine {
                return Err(Error::Config(
                    "counterexample_kk lives on the half-line".into(),
                ));
            }
            if role == Role::Local {
                return Err(Error::Config(
                    "counterexample_kk has unbounded support mass; not a local observable".into(),
                ));
            }
            Observable::counterexample_kk()
        } else if let Some(c) = expr.strip_prefix("constant:") {
            if role == Role::Local {
                return Err(Error::Config(
                    "constants are not integrable on infinite spaces; not a local observable"
                        .into(),
                ));
            }
            let c: f64 = c
                .parse()
                .map_err(|_| Error::Config(format!("bad constant in '{expr}'")))?;
            Observable::constant(c)
        } else if let Some(ab) = expr.strip_prefix("box:") {
            let mut it = ab.split(',');
            let a: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad box spec '{expr}'")))?;
            let b: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad box spec '{expr}'")))?;
            Observable::box_indicator(a, b)?
        } else if let Some(path) = expr.strip_prefix("table:") {
            let text = std::fs::read_to_string(path)?;
            Observable::from_table_csv(&text, role)?
        } else {
            return Err(Error::Config(format!("unknown observable '{expr}'")));
        };
        obs.role = role;
        Ok(obs)
    }
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("role", &self.role)
            .field("bound", &self.bound)
            .finish()
    }
}
