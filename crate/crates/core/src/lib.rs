//! Finite-difference solver for the coupled concave-convex system
//!
//! ```text
//! -Δu = λ a(x)|u|^{q-2}u + (α/(α+β)) b(x)|u|^{α-2}u|v|^β
//! -Δv = λ a(x)|v|^{q-2}v + (β/(α+β)) b(x)|u|^α|v|^{β-2}v
//! ```
//!
//! on the unit interval or square with zero boundary values, built around
//! the Nehari manifold and the fibering maps `t ↦ J_λ(tu, tv)`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod fibering;
pub mod grid;
pub mod oracle;
pub mod solver;
pub mod thresholds;
pub mod verify;

pub use energy::{IntegralTriple, Params, WeightSpec, Weights};
pub use error::{Error, Result};
pub use fibering::{FiberingCase, FiberingGeometry, NehariClass};
pub use grid::{Field, Grid, StatePair};
pub use solver::{DualSolution, SolutionReport, SolveOptions};
pub use thresholds::Thresholds;
