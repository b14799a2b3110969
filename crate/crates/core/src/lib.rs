//! Numerical laboratory for interval maps with an indifferent fixed
//! point at the origin and full increasing branches.
//!
//! The crate builds the classical modular and piecewise-linear
//! intermittent families (and perturbations of both), verifies the
//! structural assumptions behind their infinite invariant measures,
//! conjugates them to the half-line where the singular reference measure
//! becomes Lebesgue, iterates the transfer operator on grids, and runs
//! global-local mixing experiments with both a duality-based and a
//! Monte-Carlo correlation estimator.

pub mod bigfloat;
pub mod checks;
pub mod counterexample;
pub mod error;
pub mod grid;
pub mod halfline;
pub mod map;
pub mod measure;
pub mod mixing;
pub mod observable;
pub mod quad;
pub mod roots;
pub mod transfer;

pub use error::{Error, Result};
pub use map::{FamilyTag, IntervalMap, MapSpec};
pub use measure::{Mass, MeasureSpec, Space};
pub use observable::{Observable, Role};
