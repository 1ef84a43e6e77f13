//! Slow, independent reference computations used to cross-check the main
//! modules.
//!
//! Nothing here calls into `energy` or `fibering` formulas: `φ` is rebuilt
//! from the raw integrals, roots are found by dense scanning, and the scalar
//! solver has its own quadrature and projection. Only the grid operators
//! (Laplacian and Riesz solve) are shared.

use serde::Serialize;

use crate::energy::{IntegralTriple, Params, Weights};
use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, riesz_solve, Field, Grid, RIESZ_TOL};

/// Central difference `(f(t+step) - f(t-step)) / (2 step)`.
pub fn fd_derivative(f: impl Fn(f64) -> f64, t: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Precondition(format!("step {step} must be positive")));
    }
    if !(t - step > 0.0) {
        return Err(Error::Precondition(format!(
            "t - step = {} must stay positive",
            t - step
        )));
    }
    Ok((f(t + step) - f(t - step)) / (2.0 * step))
}

/// `φ(t)` straight from the definition of `J` on `t·(u, v)`.
pub fn phi_direct(t: f64, g: f64, a: f64, b: f64, lambda: f64, q: f64, p: f64) -> f64 {
    let quad = 0.5 * (t * g * t);
    let concave = lambda * a * t.powf(q) / q;
    let coupling = b * t.powf(p) / p;
    quad - concave - coupling
}

/// `φ'(t)` by differentiating each monomial of [`phi_direct`] by hand.
pub fn phi_prime_direct(t: f64, g: f64, a: f64, b: f64, lambda: f64, q: f64, p: f64) -> f64 {
    g * t - lambda * a * t.powf(q - 1.0) - b * t.powf(p - 1.0)
}

fn unpack(triple: &IntegralTriple, params: &Params) -> (f64, f64, f64, f64, f64, f64) {
    (
        triple.dirichlet,
        triple.concave,
        triple.coupling,
        params.lambda,
        params.q,
        params.alpha + params.beta,
    )
}

/// Sign changes of `φ'` on a logarithmic grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Disjoint, ascending intervals `[t_i, t_{i+1}]` over which `φ'`
    /// changes sign.
    pub brackets: Vec<(f64, f64)>,
}

pub fn scan_fibering(
    triple: &IntegralTriple,
    params: &Params,
    bounds: (f64, f64),
    count: usize,
) -> Result<ScanResult> {
    let (lower, upper) = bounds;
    if count < 1000 {
        return Err(Error::Precondition(format!(
            "scan needs at least 1000 points, got {count}"
        )));
    }
    if !(lower > 0.0 && upper > lower) {
        return Err(Error::Precondition(format!(
            "scan bounds ({lower}, {upper}) must satisfy 0 < lower < upper"
        )));
    }
    let (g, a, b, lambda, q, p) = unpack(triple, params);
    let ratio = (upper / lower).ln() / (count - 1) as f64;
    let t_at = |i: usize| {
        if i == count - 1 {
            upper
        } else {
            lower * (ratio * i as f64).exp()
        }
    };
    let mut brackets = Vec::new();
    let mut t_prev = t_at(0);
    let mut positive_prev = phi_prime_direct(t_prev, g, a, b, lambda, q, p) > 0.0;
    for i in 1..count {
        let t = t_at(i);
        let positive = phi_prime_direct(t, g, a, b, lambda, q, p) > 0.0;
        if positive != positive_prev {
            brackets.push((t_prev, t));
        }
        t_prev = t;
        positive_prev = positive;
    }
    Ok(ScanResult {
        lower,
        upper,
        count,
        brackets,
    })
}

/// Plain bisection on a sign change of `f` over `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == f_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the maximiser of a unimodal `f` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// `(G, A, B)` by explicit edge and node loops, for one pair of fields.
pub fn quadrature_triple(
    weights: &Weights,
    params: &Params,
    u: &Field,
    v: &Field,
) -> IntegralTriple {
    let grid = u.grid();
    let g = edge_sum(u) + edge_sum(v);
    let vol = grid.cell_volume();
    let mut a_sum = 0.0;
    let mut b_sum = 0.0;
    for k in 0..grid.node_count() {
        let (uk, vk) = (u.values()[k].abs(), v.values()[k].abs());
        a_sum += weights.a().values()[k] * (uk.powf(params.q) + vk.powf(params.q));
        b_sum += weights.b().values()[k] * uk.powf(params.alpha) * vk.powf(params.beta);
    }
    IntegralTriple::new(g, a_sum * vol, b_sum * vol)
}

/// `∫|∇f|²` as a sum of squared differences over grid edges, with the zero
/// boundary values written out explicitly.
fn edge_sum(f: &Field) -> f64 {
    let grid = f.grid();
    let n = grid.n();
    let h = grid.h();
    let x = f.values();
    if grid.dimension() == 1 {
        let padded: Vec<f64> = std::iter::once(0.0)
            .chain(x.iter().copied())
            .chain(std::iter::once(0.0))
            .collect();
        padded
            .windows(2)
            .map(|w| (w[1] - w[0]).powi(2))
            .sum::<f64>()
            / h
    } else {
        let at = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                0.0
            } else {
                x[j as usize * n + i as usize]
            }
        };
        let mut s = 0.0;
        for j in -1..n as isize {
            for i in -1..n as isize {
                if j >= 0 {
                    s += (at(i + 1, j) - at(i, j)).powi(2);
                }
                if i >= 0 {
                    s += (at(i, j + 1) - at(i, j)).powi(2);
                }
            }
        }
        s
    }
}

/// Smallest eigenvalue of the discrete Dirichlet Laplacian by inverse power
/// iteration. `1/sqrt` of it is the discrete `L²` embedding constant.
pub fn smallest_laplacian_eigenvalue(grid: Grid, tol: f64) -> Result<f64> {
    let mut x = Field::from_fn(grid, |x, y| 1.0 + x * (1.0 - x) + 0.3 * y);
    let mut estimate = f64::INFINITY;
    for _ in 0..10_000 {
        let norm = x.dot(&x).sqrt();
        x = x.scaled(1.0 / norm);
        let y = riesz_solve(&x, 1e-12)?;
        let next = 1.0 / x.dot(&y);
        x = y;
        if (next - estimate).abs() <= tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}

/// Result of [`scalar_reduction_solve`].
#[derive(Debug, Clone)]
pub struct ScalarSolution {
    pub u: Field,
    pub j_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Which root of the scalar fibering map to project on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarBranch {
    /// `φ` has a local minimum there.
    Lower,
    /// `φ` has a local maximum there.
    Upper,
}

struct Scalar<'a> {
    grid: Grid,
    a: &'a Field,
    b_half: &'a Field,
    lambda: f64,
    q: f64,
    p: f64,
}

impl Scalar<'_> {
    fn integrals(&self, u: &Field) -> (f64, f64, f64) {
        let vol = self.grid.cell_volume();
        let mut a_sum = 0.0;
        let mut b_sum = 0.0;
        for ((&x, &a), &b) in u
            .values()
            .iter()
            .zip(self.a.values())
            .zip(self.b_half.values())
        {
            a_sum += a * x.abs().powf(self.q);
            b_sum += b * x.abs().powf(self.p);
        }
        (edge_sum(u), a_sum * vol, b_sum * vol)
    }

    fn energy(&self, u: &Field) -> f64 {
        let (g, a, b) = self.integrals(u);
        0.5 * g - self.lambda * a / self.q - b / self.p
    }

    /// Scale factor putting `u` on the requested root of its ray, found by
    /// dense scan plus bisection on `φ'(t)/t`.
    fn project(&self, u: &Field, branch: ScalarBranch) -> Option<Field> {
        let (g0, _, _) = self.integrals(u);
        if !(g0 > 0.0) {
            return None;
        }
        let base = u.scaled(1.0 / g0.sqrt());
        let (g, a, b) = self.integrals(&base);
        let (lambda, q, p) = (self.lambda, self.q, self.p);
        let psi = |t: f64| g - lambda * a * t.powf(q - 2.0) - b * t.powf(p - 2.0);
        let count = 4000;
        let (lo, hi) = (1e-12f64, 1e12f64);
        let ratio = (hi / lo).ln() / (count - 1) as f64;
        let mut prev_t = lo;
        let mut prev = psi(lo);
        for i in 1..count {
            let t = lo * (ratio * i as f64).exp();
            let cur = psi(t);
            let rising = prev <= 0.0 && cur > 0.0;
            let falling = prev > 0.0 && cur <= 0.0;
            if (rising && branch == ScalarBranch::Lower)
                || (falling && branch == ScalarBranch::Upper)
            {
                let t0 = bisect(psi, prev_t, t);
                return Some(base.scaled(t0));
            }
            prev_t = t;
            prev = cur;
        }
        None
    }

    /// Sobolev gradient and its Riesz norm.
    fn gradient(&self, u: &Field) -> Result<(Field, f64)> {
        let lu = apply_laplacian(u);
        let mut r = lu;
        for (((ri, &x), &a), &b) in r
            .values_mut()
            .iter_mut()
            .zip(u.values())
            .zip(self.a.values())
            .zip(self.b_half.values())
        {
            let s = x.signum() * (x != 0.0) as u8 as f64;
            *ri -= self.lambda * a * s * x.abs().powf(self.q - 1.0)
                + b * s * x.abs().powf(self.p - 1.0);
        }
        let g = riesz_solve(&r, RIESZ_TOL)?;
        let norm = (self.grid.cell_volume() * r.dot(&g)).max(0.0).sqrt();
        Ok((g, norm))
    }
}

/// Solves `-Δu = λ a |u|^{q-2}u + b_half |u|^{p-2}u` with `p = α + β` on one
/// branch of the scalar Nehari manifold.
///
/// With `α = β` and `u = v` the coupled system collapses to this equation
/// with `b_half = b/2`. The descent uses fixed Sobolev-gradient steps,
/// halved whenever the gradient norm jumps, and stops at
/// `gradient_tolerance`.
pub fn scalar_reduction_solve(
    weight_a: &Field,
    weight_b_half: &Field,
    params: &Params,
    branch: ScalarBranch,
    gradient_tolerance: f64,
    max_iterations: usize,
) -> Result<ScalarSolution> {
    if params.alpha != params.beta {
        return Err(Error::Precondition(format!(
            "scalar reduction needs alpha = beta, got {} and {}",
            params.alpha, params.beta
        )));
    }
    let grid = weight_a.grid();
    if weight_b_half.grid() != grid {
        return Err(Error::Precondition(
            "weights live on different grids".into(),
        ));
    }
    if weight_a.max_abs() == 0.0 && weight_b_half.max_abs() == 0.0 {
        return Err(Error::DegenerateWeights(
            "both weights vanish, only the zero state remains".into(),
        ));
    }
    let s = Scalar {
        grid,
        a: weight_a,
        b_half: weight_b_half,
        lambda: params.lambda,
        q: params.q,
        p: params.alpha + params.beta,
    };
    let pi = std::f64::consts::PI;
    let mask = if branch == ScalarBranch::Lower {
        weight_a
    } else {
        weight_b_half
    };
    let mut init = Field::from_fn(grid, |x, y| {
        (pi * x).sin()
            * if grid.dimension() == 2 {
                (pi * y).sin()
            } else {
                1.0
            }
    });
    let masked: Vec<f64> = init
        .values()
        .iter()
        .zip(mask.values())
        .map(|(&x, &m)| if m > 0.0 { x } else { 0.0 })
        .collect();
    if masked.iter().any(|&x| x != 0.0) {
        init = Field::from_values(grid, masked)?;
    }
    let mut u = s.project(&init, branch).ok_or(Error::ZeroState)?;
    let (mut grad, mut norm) = s.gradient(&u)?;
    let mut step = 1.0;
    let mut iterations = 0;
    while norm > gradient_tolerance && iterations < max_iterations {
        iterations += 1;
        let candidate = u.add_scaled(-step, &grad).map(f64::abs);
        let Some(next) = s.project(&candidate, branch) else {
            step *= 0.5;
            continue;
        };
        let (g_next, n_next) = s.gradient(&next)?;
        if n_next > 2.0 * norm {
            step *= 0.5;
            if step < 1e-8 {
                break;
            }
            continue;
        }
        u = next;
        grad = g_next;
        norm = n_next;
    }
    Ok(ScalarSolution {
        j_value: s.energy(&u),
        converged: norm <= gradient_tolerance,
        u,
        gradient_norm: norm,
        iterations,
    })
}
