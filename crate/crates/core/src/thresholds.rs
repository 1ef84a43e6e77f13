//! Computable constants below which the fibering geometry is uniform.
//!
//! With `p = α+β`, `h(t) = t²G/2 - t^p B/p` peaks at
//! `t_max = (G/B)^{1/(p-2)}` with value
//! `(p-2)/(2p) · (G^p / B²)^{1/(p-2)}`. Bounding that peak from below with
//! the embedding constant `S_p` gives `δ`; bounding the concave term at
//! `t_max` with `S_q` gives `c`; then `λ₁ = δ^{(2-q)/2} / (2c)` and every
//! `M⁻` state has `J ≥ δ₁(λ) = δ^{q/2} (δ^{(2-q)/2} - λc)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{IntegralTriple, Params, Weights};
use crate::error::{Error, Result};
use crate::grid::{field_dirichlet_energy, riesz_solve, Field, Grid, RIESZ_TOL};

/// Number of random starts for the embedding-constant ascent.
pub const ASCENT_RESTARTS: usize = 5;
/// Iteration cap per start.
pub const ASCENT_MAX_ITER: usize = 10_000;
/// Default relative stopping tolerance of the ascent.
pub const ASCENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Embedding constant for the exponent `q`.
    #[serde(rename = "S_q")]
    pub s_q: f64,
    /// Embedding constant for the exponent `α+β`.
    #[serde(rename = "S_pq")]
    pub s_pq: f64,
    pub delta: f64,
    pub c: f64,
    pub lambda1: f64,
    /// Seed of the ascent restarts.
    pub seed: u64,
    /// Concave exponent the constants were computed for.
    pub q: f64,
}

impl Thresholds {
    /// Lower bound on `J` over `M⁻` at parameter `lambda`.
    pub fn delta1(&self, lambda: f64) -> f64 {
        let q = self.q;
        self.delta.powf(q / 2.0) * (self.delta.powf((2.0 - q) / 2.0) - lambda * self.c)
    }
}

/// Same constants from explicit ingredients (used by tests and the CLI).
pub fn thresholds_from_constants(
    weights_a_sup: f64,
    weights_b_plus_sup: f64,
    exponents: &Params,
    s_q: f64,
    s_pq: f64,
    seed: u64,
) -> Result<Thresholds> {
    if !(weights_a_sup > 0.0) || !(weights_b_plus_sup > 0.0) {
        return Err(Error::DegenerateWeights(format!(
            "need ‖a‖∞ > 0 and ‖b⁺‖∞ > 0, got {weights_a_sup} and {weights_b_plus_sup}"
        )));
    }
    let (q, p) = (exponents.q, exponents.degree());
    let k = (p - 2.0) / (2.0 * p);
    let delta = k * (1.0 / (weights_b_plus_sup.powi(2) * s_pq.powf(2.0 * p))).powf(1.0 / (p - 2.0));
    let c = weights_a_sup / q * s_q.powf(q) * (1.0 / k).powf(q / 2.0);
    let lambda1 = delta.powf((2.0 - q) / 2.0) / (2.0 * c);
    Ok(Thresholds {
        s_q,
        s_pq,
        delta,
        c,
        lambda1,
        seed,
        q,
    })
}

fn lr_norm(f: &Field, r: f64) -> f64 {
    let sum: f64 = f.values().iter().map(|x| x.abs().powf(r)).sum();
    (f.grid().cell_volume() * sum).powf(1.0 / r)
}

/// `‖u‖_{L^r} / ‖∇u‖_{L²}` with the grid's own quadrature.
pub fn embedding_quotient(f: &Field, r: f64) -> f64 {
    lr_norm(f, r) / field_dirichlet_energy(f).sqrt()
}

fn ascend(start: Field, r: f64, tol: f64) -> Result<f64> {
    let normalize = |f: Field| {
        let norm = field_dirichlet_energy(&f).sqrt();
        f.scaled(1.0 / norm)
    };
    let mut u = normalize(start);
    let mut value = lr_norm(&u, r);
    for _ in 0..ASCENT_MAX_ITER {
        // Fixed point of the normalised map u ↦ (-Δ)^{-1}(|u|^{r-2}u). By
        // convexity of ∫|u|^r each step cannot decrease the quotient.
        let rhs = u.map(|x| {
            if x == 0.0 {
                0.0
            } else {
                x.signum() * x.abs().powf(r - 1.0)
            }
        });
        let w = normalize(riesz_solve(&rhs, RIESZ_TOL)?);
        let next = lr_norm(&w, r);
        let change = (next - value) / value;
        u = w;
        value = value.max(next);
        if change.abs() <= tol {
            return Ok(value);
        }
    }
    Err(Error::AscentStalled {
        r,
        estimate: value,
        iterations: ASCENT_MAX_ITER,
    })
}

/// Estimates `S_r = sup ‖u‖_r / ‖∇u‖₂` over nonzero grid fields.
///
/// Runs the ascent from [`ASCENT_RESTARTS`] random nonnegative starts drawn
/// from `seed` and keeps the largest quotient.
pub fn estimate_sobolev_constant(grid: Grid, r: f64, tol: f64, seed: u64) -> Result<f64> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::Parameter {
            name: "r",
            reason: format!("embedding exponent {r} must be finite and exceed 1"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..ASCENT_RESTARTS {
        let values = (0..grid.node_count())
            .map(|_| rng.random::<f64>() + 1e-3)
            .collect();
        let start = Field::from_values(grid, values)?;
        best = best.max(ascend(start, r, tol)?);
    }
    Ok(best)
}

/// Maximiser and maximum of `h(t) = t²G/2 - t^{α+β}B/(α+β)`.
pub fn t_max_h(triple: &IntegralTriple, params: &Params) -> Result<(f64, f64)> {
    let (g, b) = (triple.dirichlet, triple.coupling);
    if !(b > 0.0) {
        return Err(Error::NoInteriorMax(b));
    }
    let p = params.degree();
    let t_max = (g / b).powf(1.0 / (p - 2.0));
    let h_max = (p - 2.0) / (2.0 * p) * (g.powf(p) / (b * b)).powf(1.0 / (p - 2.0));
    Ok((t_max, h_max))
}

/// `h(t)` itself (the fibering map with `λ = 0`).
pub fn h_value(t: f64, triple: &IntegralTriple, params: &Params) -> f64 {
    let p = params.degree();
    0.5 * t * t * triple.dirichlet - t.powf(p) / p * triple.coupling
}

/// Estimates both embedding constants on the weights' grid and assembles
/// `δ`, `c` and `λ₁`. `exponents.lambda` is ignored.
pub fn compute_thresholds(weights: &Weights, exponents: &Params, seed: u64) -> Result<Thresholds> {
    let grid = weights.grid();
    if !(weights.a_sup() > 0.0) || !(weights.b_plus_sup() > 0.0) {
        return Err(Error::DegenerateWeights(format!(
            "need ‖a‖∞ > 0 and ‖b⁺‖∞ > 0, got {} and {}",
            weights.a_sup(),
            weights.b_plus_sup()
        )));
    }
    let s_q = estimate_sobolev_constant(grid, exponents.q, ASCENT_TOL, seed)?;
    let s_pq = estimate_sobolev_constant(grid, exponents.degree(), ASCENT_TOL, seed)?;
    thresholds_from_constants(
        weights.a_sup(),
        weights.b_plus_sup(),
        exponents,
        s_q,
        s_pq,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..300 {
            let c = b - gr * (b - a);
            let d = a + gr * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    fn exps() -> Params {
        Params::exponents(1.5, 2.0, 2.0).unwrap()
    }

    #[test]
    fn h_maximum() {
        let p = exps();
        let tr = IntegralTriple::new(1.0, 0.0, 1.0);
        let (t, h) = t_max_h(&tr, &p).unwrap();
        assert_eq!((t, h), (1.0, 0.25));
        let tg = golden_max(|t| h_value(t, &tr, &p), 0.0, 5.0);
        assert!((tg - 1.0).abs() < 1e-7);

        let tr = IntegralTriple::new(16.0, 0.0, 1.0);
        let (t, h) = t_max_h(&tr, &p).unwrap();
        assert!((t - 4.0).abs() < 1e-14);
        let tg = golden_max(|t| h_value(t, &tr, &p), 0.0, 20.0);
        assert!((tg - 4.0).abs() < 1e-6);
        assert!((h - h_value(t, &tr, &p)).abs() < 1e-12);
        let eps = 1e-5;
        let slope = (h_value(t + eps, &tr, &p) - h_value(t - eps, &tr, &p)) / (2.0 * eps);
        assert!(slope.abs() < 1e-8);

        assert!(matches!(
            t_max_h(&IntegralTriple::new(1.0, 0.0, -1.0), &p),
            Err(Error::NoInteriorMax(_))
        ));
    }

    #[test]
    fn h_maximum_general_degree() {
        // Coefficient (p-2)/(2p): compare with direct maximisation for p = 5.
        let p = Params::exponents(1.3, 2.0, 3.0).unwrap();
        let tr = IntegralTriple::new(2.5, 0.0, 0.7);
        let (t, h) = t_max_h(&tr, &p).unwrap();
        let tg = golden_max(|t| h_value(t, &tr, &p), 0.0, 10.0);
        assert!((tg - t).abs() < 1e-6);
        assert!((h - h_value(tg, &tr, &p)).abs() < 1e-12);
    }

    #[test]
    fn delta1_identities() {
        let t = thresholds_from_constants(1.0, 1.0, &exps(), 0.36, 0.35, 0).unwrap();
        assert!((t.delta1(0.0) - t.delta).abs() < 1e-12 * t.delta);
        assert!((t.delta1(t.lambda1) - t.delta / 2.0).abs() < 1e-12 * t.delta);
        let by_hand = t.delta.powf(0.75) * (t.delta.powf(0.25) - 0.3 * t.c);
        assert!((t.delta1(0.3) - by_hand).abs() < 1e-12 * t.delta);
        assert!((t.lambda1 - t.delta.powf(0.25) / (2.0 * t.c)).abs() < 1e-15);
    }

    #[test]
    fn lambda1_shrinks_with_weights() {
        let base = thresholds_from_constants(1.0, 1.0, &exps(), 0.36, 0.35, 0).unwrap();
        let a2 = thresholds_from_constants(2.0, 1.0, &exps(), 0.36, 0.35, 0).unwrap();
        let b2 = thresholds_from_constants(1.0, 2.0, &exps(), 0.36, 0.35, 0).unwrap();
        assert!(a2.lambda1 < base.lambda1);
        assert!(b2.lambda1 < base.lambda1);
        assert!(thresholds_from_constants(0.0, 1.0, &exps(), 0.36, 0.35, 0).is_err());
    }

    #[test]
    fn poincare_constant() {
        let g = Grid::new(1, 400).unwrap();
        let s2 = estimate_sobolev_constant(g, 2.0, ASCENT_TOL, 7).unwrap();
        let inv_pi = 1.0 / std::f64::consts::PI;
        assert!((s2 - inv_pi).abs() < 0.01 * inv_pi);
        // Discrete eigenvalue 4 sin²(πh/2)/h² as the oracle.
        let h = g.h();
        let lam_h = 4.0 * (std::f64::consts::PI * h / 2.0).sin().powi(2) / (h * h);
        assert!((s2 - lam_h.powf(-0.5)).abs() < 1e-9);
    }

    #[test]
    fn estimates_converge_monotonically() {
        // The discrete Dirichlet eigenvalue sits below π², so the discrete
        // constant approaches 1/π from above as the grid is refined.
        let est: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&n| {
                estimate_sobolev_constant(Grid::new(1, n).unwrap(), 2.0, ASCENT_TOL, 1).unwrap()
            })
            .collect();
        assert!(est[0] > est[1] && est[1] > est[2]);
        assert!(est[2] > 1.0 / std::f64::consts::PI);
    }

    #[test]
    fn quotient_is_scale_invariant() {
        let g = Grid::new(2, 9).unwrap();
        let f = Field::from_fn(g, |x, y| {
            x * (1.0 - x) * y * (1.0 - y) + 0.1 * (7.0 * x).sin()
        });
        for t in [0.01, 3.0, -2.0] {
            let a = embedding_quotient(&f, 3.0);
            let b = embedding_quotient(&f.scaled(t), 3.0);
            assert!((a - b).abs() < 1e-13 * a);
        }
    }

    #[test]
    fn estimate_dominates_samples() {
        let g = Grid::new(1, 60).unwrap();
        let s4 = estimate_sobolev_constant(g, 4.0, ASCENT_TOL, 3).unwrap();
        let sq = estimate_sobolev_constant(g, 1.5, ASCENT_TOL, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let f = Field::from_fn(g, |_, _| rng.random::<f64>() - 0.3);
            assert!(embedding_quotient(&f, 4.0) <= s4 * (1.0 + 1e-12));
            assert!(embedding_quotient(&f, 1.5) <= sq * (1.0 + 1e-12));
        }
        let pi = std::f64::consts::PI;
        let bump = Field::from_fn(g, |x, _| (pi * x).sin());
        assert!(embedding_quotient(&bump, 4.0) <= s4);
        assert!(embedding_quotient(&bump, 1.5) <= sq);
        assert!(estimate_sobolev_constant(g, 1.0, ASCENT_TOL, 3).is_err());
    }
}
