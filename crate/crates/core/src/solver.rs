//! Minimisation of `J_λ` on each branch of the Nehari manifold.
//!
//! The descent runs on the reduced functional `w ↦ J(t(w) w)`, where
//! `t(w)` is the branch root of the ray through `w`. At a Nehari point the
//! gradient of that functional coincides with the unconstrained Sobolev
//! gradient `(-Δ)^{-1}` of the Euler residual, so each step is
//! "move along the Riesz gradient, then rescale back onto the branch".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{
    energy, energy_difference, euler_residual, integral_triple, nehari_constraint, Params, Weights,
};
use crate::error::{Error, Result};
use crate::fibering::{phi_second, project_to_nehari, NehariClass};
use crate::grid::{riesz_solve, Field, StatePair, RIESZ_TOL};

/// Relative L² distance above which two states count as different.
pub const DISTINCTNESS_TOL: f64 = 1e-3;
/// Window (in accepted iterations) of the energy stagnation test.
const STAGNATION_WINDOW: usize = 5;
const STAGNATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_outer_iterations: usize,
    /// First trial step of the line search.
    pub step_size: f64,
    /// Step reduction factor of the line search, in `(0, 1)`.
    pub backtracking: f64,
    /// Bound on the Riesz norm of the Sobolev gradient at convergence.
    pub gradient_tolerance: f64,
    /// Bound on `|G - λA - B| / G` at convergence.
    pub constraint_tolerance: f64,
    /// Replace `(u, v)` by `(|u|, |v|)` before every projection.
    pub positivity: bool,
    pub seed: u64,
    /// Extra randomly perturbed starts per branch in [`solve_dual`].
    pub restarts: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 5000,
            step_size: 1.0,
            backtracking: 0.5,
            gradient_tolerance: 1e-8,
            constraint_tolerance: 1e-10,
            positivity: true,
            seed: 0,
            restarts: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::Parameter { name, reason });
        if !(self.step_size > 0.0) {
            return bad("step_size", format!("{} must be positive", self.step_size));
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return bad(
                "backtracking",
                format!("{} must lie in (0, 1)", self.backtracking),
            );
        }
        if !(self.gradient_tolerance > 0.0) {
            return bad(
                "gradient_tolerance",
                format!("{} must be positive", self.gradient_tolerance),
            );
        }
        if !(self.constraint_tolerance > 0.0) {
            return bad(
                "constraint_tolerance",
                format!("{} must be positive", self.constraint_tolerance),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    #[serde(skip)]
    pub state: StatePair,
    pub branch: NehariClass,
    #[serde(rename = "J_value")]
    pub j_value: f64,
    /// `|G - λA - B| / G` at the final state.
    pub constraint_residual: f64,
    /// Riesz norm of the full Sobolev gradient at the final state.
    pub pde_residual_riesz_norm: f64,
    /// Same, with the radial component removed.
    pub projected_gradient_norm: f64,
    /// Smallest nodal value over both components.
    pub interior_min: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `J` after every accepted step, starting with the projected initial
    /// state. Built from exact increments, so it is non-increasing.
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
    /// Smallest `±φ''(1)/G` over accepted iterates (positive means every
    /// iterate stayed strictly on its branch).
    pub branch_margin: f64,
    /// Largest `‖u - v‖_∞` over accepted iterates.
    pub max_component_gap: f64,
}

/// A state built from the first Dirichlet eigenfunction, restricted to where
/// the relevant weight is positive (`a` for `Plus`, `b` for `Minus`).
///
/// Falls back to the unrestricted bump when that weight is nowhere positive.
pub fn default_initializer(weights: &Weights, branch: NehariClass) -> StatePair {
    let grid = weights.grid();
    let pi = std::f64::consts::PI;
    let bump = Field::from_fn(grid, |x, y| {
        let s = (pi * x).sin();
        if grid.dimension() == 2 {
            s * (pi * y).sin()
        } else {
            s
        }
    });
    let mask = match branch {
        NehariClass::Minus => weights.b(),
        _ => weights.a(),
    };
    let mut u = bump.clone();
    for (val, &m) in u.values_mut().iter_mut().zip(mask.values()) {
        if m <= 0.0 {
            *val = 0.0;
        }
    }
    if u.max_abs() == 0.0 {
        u = bump;
    }
    StatePair { u: u.clone(), v: u }
}

struct Gradient {
    direction: StatePair,
    norm: f64,
    projected_norm: f64,
}

fn sobolev_gradient(weights: &Weights, params: &Params, state: &StatePair) -> Result<Gradient> {
    let r = euler_residual(weights, params, state);
    let direction = StatePair {
        u: riesz_solve(&r.u, RIESZ_TOL)?,
        v: riesz_solve(&r.v, RIESZ_TOL)?,
    };
    let vol = state.grid().cell_volume();
    let norm_sq = vol * (r.u.dot(&direction.u) + r.v.dot(&direction.v));
    let radial = vol * (r.u.dot(&state.u) + r.v.dot(&state.v));
    let g = crate::grid::dirichlet_energy(state);
    let projected_sq = if g > 0.0 {
        norm_sq - radial * radial / g
    } else {
        norm_sq
    };
    Ok(Gradient {
        direction,
        norm: norm_sq.max(0.0).sqrt(),
        projected_norm: projected_sq.max(0.0).sqrt(),
    })
}

fn branch_sign(branch: NehariClass) -> f64 {
    if branch == NehariClass::Minus {
        -1.0
    } else {
        1.0
    }
}

fn component_gap(s: &StatePair) -> f64 {
    s.u.values()
        .iter()
        .zip(s.v.values())
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn stagnated(trace: &[f64]) -> bool {
    match trace.len().checked_sub(STAGNATION_WINDOW + 1) {
        Some(k) => {
            let last = trace[trace.len() - 1];
            (trace[k] - last).abs() <= STAGNATION_TOL * last.abs().max(1.0)
        }
        None => true,
    }
}

/// Minimises `J_λ` over the requested branch, starting from `init`.
pub fn minimize_on_branch(
    weights: &Weights,
    params: &Params,
    branch: NehariClass,
    init: &StatePair,
    options: &SolveOptions,
) -> Result<SolutionReport> {
    options.validate()?;
    if branch == NehariClass::Zero {
        return Err(Error::Precondition(
            "minimisation needs the Plus or Minus branch".into(),
        ));
    }
    let start = if options.positivity {
        init.abs()
    } else {
        init.clone()
    };
    let triple = integral_triple(weights, params, &start);
    match branch {
        NehariClass::Plus if !(triple.concave > 0.0) => {
            return Err(Error::Precondition(format!(
                "Plus branch needs ∫a(|u|^q+|v|^q) > 0, initial state has {}",
                triple.concave
            )))
        }
        NehariClass::Minus if !(triple.coupling > 0.0) => {
            return Err(Error::Precondition(format!(
                "Minus branch needs ∫b|u|^α|v|^β > 0, initial state has {}",
                triple.coupling
            )))
        }
        _ => {}
    }

    let sign = branch_sign(branch);
    let projected = project_to_nehari(weights, params, &start, branch)?;
    let mut state = projected.state;
    let mut trace = vec![energy(weights, params, &state)];
    let mut margin = sign * phi_second(1.0, &projected.triple, params) / projected.triple.dirichlet;
    let mut gap = component_gap(&state);
    let max_step = options.step_size;
    let mut step = options.step_size;
    let mut iterations = 0;
    let mut converged = false;

    let mut grad = sobolev_gradient(weights, params, &state)?;
    loop {
        let triple = integral_triple(weights, params, &state);
        let constraint = nehari_constraint(&triple, params).abs() / triple.dirichlet;
        if grad.norm <= options.gradient_tolerance
            && constraint <= options.constraint_tolerance
            && stagnated(&trace)
        {
            converged = true;
            break;
        }
        if iterations >= options.max_outer_iterations {
            break;
        }

        let mut trial = (step / options.backtracking).min(max_step);
        let mut accepted = None;
        let mut lost_branch = None;
        while trial >= 1e-14 * options.step_size {
            let mut candidate = state.add_scaled(-trial, &grad.direction);
            if options.positivity {
                candidate = candidate.abs();
            }
            match project_to_nehari(weights, params, &candidate, branch) {
                Ok(p) => {
                    let change = energy_difference(weights, params, &state, &p.state);
                    let curvature = sign * phi_second(1.0, &p.triple, params);
                    if change < 0.0 && curvature > 0.0 {
                        accepted = Some((p, change, curvature));
                        break;
                    }
                }
                Err(e @ (Error::BranchAbsent { .. } | Error::ZeroState)) => {
                    lost_branch = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            trial *= options.backtracking;
        }

        let Some((p, change, curvature)) = accepted else {
            // No step lowers J: either the gradient is already at the
            // rounding floor or the descent is stuck.
            if grad.norm <= options.gradient_tolerance && constraint <= options.constraint_tolerance
            {
                converged = true;
            } else if let Some(reason) = lost_branch.filter(|_| iterations == 0) {
                let report = build_report(
                    weights, params, branch, state, trace, iterations, false, margin, gap, &grad,
                );
                return Err(Error::BranchLost {
                    branch,
                    reason,
                    last: Box::new(report),
                });
            }
            break;
        };
        step = trial;
        iterations += 1;
        let last = *trace.last().expect("trace starts non-empty");
        trace.push(last + change);
        margin = margin.min(curvature / p.triple.dirichlet);
        state = p.state;
        gap = gap.max(component_gap(&state));
        grad = sobolev_gradient(weights, params, &state)?;
    }

    Ok(build_report(
        weights, params, branch, state, trace, iterations, converged, margin, gap, &grad,
    ))
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    weights: &Weights,
    params: &Params,
    branch: NehariClass,
    state: StatePair,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    margin: f64,
    gap: f64,
    grad: &Gradient,
) -> SolutionReport {
    let triple = integral_triple(weights, params, &state);
    SolutionReport {
        j_value: energy(weights, params, &state),
        constraint_residual: nehari_constraint(&triple, params).abs() / triple.dirichlet,
        pde_residual_riesz_norm: grad.norm,
        projected_gradient_norm: grad.projected_norm,
        interior_min: state.u.min().min(state.v.min()),
        state,
        branch,
        iterations,
        converged,
        energy_trace: trace,
        branch_margin: margin,
        max_component_gap: gap,
    }
}

/// Outcome of one branch inside [`solve_dual`].
#[derive(Debug, Clone)]
pub enum BranchOutcome {
    Solved(SolutionReport),
    Failed {
        error: String,
        last: Option<Box<SolutionReport>>,
    },
}

impl BranchOutcome {
    pub fn report(&self) -> Option<&SolutionReport> {
        match self {
            Self::Solved(r) => Some(r),
            Self::Failed { .. } => None,
        }
    }

    pub fn converged(&self) -> bool {
        self.report().is_some_and(|r| r.converged)
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub plus: BranchOutcome,
    pub minus: BranchOutcome,
    /// Relative L² distance between the two states.
    pub separation: Option<f64>,
    /// Both branches converged to positive, distinct states.
    pub complete: bool,
    /// Distinct minimisers found per branch (`[plus, minus]`) over all starts.
    pub multiplicity: [usize; 2],
    pub warnings: Vec<String>,
}

impl DualSolution {
    pub fn is_partial(&self) -> bool {
        !self.complete
    }
}

/// Relative L² distance `‖s1 - s2‖ / max(‖s1‖, ‖s2‖)`.
pub fn separation(s1: &StatePair, s2: &StatePair) -> f64 {
    let diff = s1.add_scaled(-1.0, s2).l2_norm();
    diff / s1.l2_norm().max(s2.l2_norm())
}

fn perturbed(init: &StatePair, rng: &mut ChaCha8Rng) -> StatePair {
    let mut s = init.clone();
    for x in s.u.values_mut().iter_mut().chain(s.v.values_mut()) {
        *x *= 1.0 + 0.5 * (rng.random::<f64>() - 0.5);
    }
    s
}

fn solve_branch(
    weights: &Weights,
    params: &Params,
    branch: NehariClass,
    options: &SolveOptions,
) -> (BranchOutcome, usize) {
    let init = default_initializer(weights, branch);
    let stream = if branch == NehariClass::Plus { 0 } else { 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(stream);
    let mut best: Option<SolutionReport> = None;
    let mut first_error = None;
    let mut found: Vec<StatePair> = Vec::new();
    for k in 0..=options.restarts {
        let start = if k == 0 {
            init.clone()
        } else {
            perturbed(&init, &mut rng)
        };
        match minimize_on_branch(weights, params, branch, &start, options) {
            Ok(report) => {
                if report.converged
                    && found
                        .iter()
                        .all(|s| separation(s, &report.state) > DISTINCTNESS_TOL)
                {
                    found.push(report.state.clone());
                }
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (report.converged && !b.converged)
                            || (report.converged == b.converged && report.j_value < b.j_value)
                    }
                };
                if better {
                    best = Some(report);
                }
            }
            Err(e) => {
                if first_error.is_none() {
                    let last = match &e {
                        Error::BranchLost { last, .. } => Some(last.clone()),
                        _ => None,
                    };
                    first_error = Some((e.to_string(), last));
                }
            }
        }
    }
    let outcome = match (best, first_error) {
        (Some(r), _) => BranchOutcome::Solved(r),
        (None, Some((error, last))) => BranchOutcome::Failed { error, last },
        (None, None) => unreachable!("at least one start runs"),
    };
    (outcome, found.len())
}

/// Runs both branch minimisations from the default initialisers.
///
/// `lambda1`, when known, only feeds a warning: above it nothing guarantees
/// that both branches exist.
pub fn solve_dual(
    weights: &Weights,
    params: &Params,
    options: &SolveOptions,
    lambda1: Option<f64>,
) -> DualSolution {
    let mut warnings = weights.diagnostics();
    if let Some(l1) = lambda1 {
        if params.lambda >= l1 {
            warnings.push(format!(
                "lambda = {} is not below the computed threshold {l1}",
                params.lambda
            ));
        }
    }
    let ((plus, n_plus), (minus, n_minus)) = join(
        || solve_branch(weights, params, NehariClass::Plus, options),
        || solve_branch(weights, params, NehariClass::Minus, options),
    );
    let separation = match (plus.report(), minus.report()) {
        (Some(p), Some(m)) => Some(separation(&p.state, &m.state)),
        _ => None,
    };
    let positive = |o: &BranchOutcome| o.report().is_some_and(|r| r.interior_min > 0.0);
    let complete = plus.converged()
        && minus.converged()
        && positive(&plus)
        && positive(&minus)
        && separation.is_some_and(|s| s > DISTINCTNESS_TOL);
    for (name, o) in [("plus", &plus), ("minus", &minus)] {
        match o {
            BranchOutcome::Failed { error, .. } => {
                warnings.push(format!("{name} branch failed: {error}"))
            }
            BranchOutcome::Solved(r) if !r.converged => {
                warnings.push(format!("{name} branch hit the iteration cap"))
            }
            BranchOutcome::Solved(r) if r.interior_min <= 0.0 => {
                warnings.push(format!("{name} branch solution is not strictly positive"))
            }
            _ => {}
        }
    }
    if n_plus > 1 || n_minus > 1 {
        warnings.push(format!(
            "distinct minimisers across starts: plus {n_plus}, minus {n_minus}; reporting the lowest energy"
        ));
    }
    DualSolution {
        plus,
        minus,
        separation,
        complete,
        multiplicity: [n_plus, n_minus],
        warnings,
    }
}

#[cfg(feature = "parallel")]
fn join<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn join<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B) -> (A, B) {
    (a(), b())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    #[serde(rename = "J_plus")]
    pub j_plus: f64,
    #[serde(rename = "J_minus")]
    pub j_minus: f64,
    pub conv_plus: bool,
    pub conv_minus: bool,
    pub separation: f64,
}

impl SweepRow {
    fn from_dual(lambda: f64, dual: &DualSolution) -> Self {
        let j = |o: &BranchOutcome| o.report().map_or(f64::NAN, |r| r.j_value);
        Self {
            lambda,
            j_plus: j(&dual.plus),
            j_minus: j(&dual.minus),
            conv_plus: dual.plus.converged(),
            conv_minus: dual.minus.converged(),
            separation: dual.separation.unwrap_or(f64::NAN),
        }
    }
}

/// Independent [`solve_dual`] runs, one per `λ`, returned in input order.
///
/// Each row reseeds from `options.seed + row`, so the table does not depend
/// on how rows are scheduled.
pub fn lambda_sweep(
    weights: &Weights,
    base: &Params,
    lambdas: &[f64],
    options: &SolveOptions,
    lambda1: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let params: Vec<Params> = lambdas
        .iter()
        .map(|&l| base.with_lambda(l))
        .collect::<Result<_>>()?;
    let row = |(k, p): (usize, &Params)| {
        let opts = SolveOptions {
            seed: options.seed.wrapping_add(k as u64),
            ..*options
        };
        SweepRow::from_dual(p.lambda, &solve_dual(weights, p, &opts, lambda1))
    };
    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        params.par_iter().enumerate().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows = params.iter().enumerate().map(row).collect();
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "lambda,J_plus,J_minus,conv_plus,conv_minus,separation";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.lambda, r.j_plus, r.j_minus, r.conv_plus, r.conv_minus, r.separation
        ));
    }
    out
}
