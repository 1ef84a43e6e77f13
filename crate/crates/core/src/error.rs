use thiserror::Error;

use crate::fibering::{FiberingCase, NehariClass};
use crate::solver::SolutionReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported discretization: {0}")]
    Discretization(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("conjugate gradient stopped at relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    #[error("the zero state has no fibering geometry")]
    ZeroState,

    #[error("branch {requested:?} is absent, fibering geometry is {actual:?}")]
    BranchAbsent {
        requested: NehariClass,
        actual: FiberingCase,
    },

    #[error("state is off the Nehari manifold (constraint residual {residual:e})")]
    OffManifold { residual: f64 },

    #[error("h(t) has no interior maximum when the coupling integral is {0} <= 0")]
    NoInteriorMax(f64),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("embedding-constant ascent for r = {r} did not settle after {iterations} iterations (last estimate {estimate})")]
    AscentStalled {
        r: f64,
        estimate: f64,
        iterations: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("descent lost the {branch:?} branch: {reason}")]
    BranchLost {
        branch: NehariClass,
        reason: String,
        last: Box<SolutionReport>,
    },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
