//! The Euler functional of the coupled system
//!
//! ```text
//! -Δu = λ a |u|^{q-2} u + α/(α+β) b |u|^{α-2} u |v|^β
//! -Δv = λ a |v|^{q-2} v + β/(α+β) b |u|^α |v|^{β-2} v
//! ```
//!
//! with zero Dirichlet data. Every quantity on a ray `t ↦ (tu, tv)` is a
//! function of the three integrals collected in [`IntegralTriple`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    apply_laplacian, dirichlet_energy, field_dirichlet_energy_change, read_field, Field, Grid,
    StatePair,
};

/// Exponents and the parameter `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lambda: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Params {
    pub fn new(lambda: f64, q: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self::exponents(q, alpha, beta)?;
        p.with_lambda(lambda)
    }

    /// Exponents only; `λ` is left at zero for callers (thresholds) that
    /// must not depend on it.
    pub fn exponents(q: f64, alpha: f64, beta: f64) -> Result<Self> {
        let bad = |name, reason: &str| {
            Err(Error::Parameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(q > 1.0 && q < 2.0) {
            return bad("q", &format!("{q} is outside (1, 2)"));
        }
        if !(alpha > 1.0) || !alpha.is_finite() {
            return bad("alpha", &format!("{alpha} must exceed 1"));
        }
        if !(beta > 1.0) || !beta.is_finite() {
            return bad("beta", &format!("{beta} must exceed 1"));
        }
        Ok(Self {
            lambda: 0.0,
            q,
            alpha,
            beta,
        })
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter {
                name: "lambda",
                reason: format!("{lambda} must be positive and finite"),
            });
        }
        Ok(Self { lambda, ..self })
    }

    /// `α + β`, the homogeneity degree of the coupling term.
    pub fn degree(&self) -> f64 {
        self.alpha + self.beta
    }

    /// `p* = (α+β)/(α+β-q)`, the integrability exponent asked of `a`.
    pub fn p_star(&self) -> f64 {
        self.degree() / (self.degree() - self.q)
    }
}

/// How a weight function is specified: a preset or a nodal file.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// `const:c`
    Const(f64),
    /// `sin2pi`: `sin(2πx)`, positive on `x < 1/2` and negative beyond.
    Sin2Pi,
    /// `step:x0`: `+1` for `x < x0`, `-1` otherwise.
    Step(f64),
    /// Any other string is a path to a field file.
    File(PathBuf),
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let number = |v: &str| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parameter {
                    name: "weight",
                    reason: format!("bad number in preset `{s}`"),
                })
        };
        if s == "sin2pi" {
            Ok(Self::Sin2Pi)
        } else if let Some(c) = s.strip_prefix("const:") {
            Ok(Self::Const(number(c)?))
        } else if let Some(x0) = s.strip_prefix("step:") {
            Ok(Self::Step(number(x0)?))
        } else if s.is_empty() {
            Err(Error::Parameter {
                name: "weight",
                reason: "empty weight specification".into(),
            })
        } else {
            Ok(Self::File(PathBuf::from(s)))
        }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "const:{c}"),
            Self::Sin2Pi => f.write_str("sin2pi"),
            Self::Step(x0) => write!(f, "step:{x0}"),
            Self::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl WeightSpec {
    /// Nodal samples on `grid`. Presets depend on the first coordinate only.
    pub fn sample(&self, grid: Grid) -> Result<Field> {
        match self {
            Self::Const(c) => Ok(Field::from_fn(grid, |_, _| *c)),
            Self::Sin2Pi => Ok(Field::from_fn(grid, |x, _| {
                (2.0 * std::f64::consts::PI * x).sin()
            })),
            Self::Step(x0) => Ok(Field::from_fn(
                grid,
                |x, _| if x < *x0 { 1.0 } else { -1.0 },
            )),
            Self::File(path) => {
                let file = std::fs::File::open(path)?;
                let field = read_field(std::io::BufReader::new(file))?;
                if field.grid() != grid {
                    return Err(Error::Format(format!(
                        "{} holds a {}D grid with n = {}, expected {}D with n = {}",
                        path.display(),
                        field.grid().dimension(),
                        field.grid().n(),
                        grid.dimension(),
                        grid.n()
                    )));
                }
                Ok(field)
            }
        }
    }
}

/// Sampled weights `a` and `b` with their cached sup norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    a: Field,
    b: Field,
    a_sup: f64,
    b_plus_sup: f64,
}

impl Weights {
    pub fn new(a: Field, b: Field) -> Result<Self> {
        if a.grid() != b.grid() {
            return Err(Error::Discretization(
                "weights live on different grids".into(),
            ));
        }
        let a_sup = a.max_abs();
        let b_plus_sup = b.values().iter().fold(0.0f64, |m, &x| m.max(x));
        Ok(Self {
            a,
            b,
            a_sup,
            b_plus_sup,
        })
    }

    pub fn from_specs(grid: Grid, a: &WeightSpec, b: &WeightSpec) -> Result<Self> {
        Self::new(a.sample(grid)?, b.sample(grid)?)
    }

    pub fn grid(&self) -> Grid {
        self.a.grid()
    }

    pub fn a(&self) -> &Field {
        &self.a
    }

    pub fn b(&self) -> &Field {
        &self.b
    }

    /// `‖a‖_∞` over the nodes.
    pub fn a_sup(&self) -> f64 {
        self.a_sup
    }

    /// `‖b⁺‖_∞` over the nodes.
    pub fn b_plus_sup(&self) -> f64 {
        self.b_plus_sup
    }

    /// Diagnostics for weights that are nowhere positive; such data falls
    /// outside the setting where two positive solutions are expected.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if !self.a.values().iter().any(|&x| x > 0.0) {
            notes.push("weight a has no positive sample".to_string());
        }
        if !self.b.values().iter().any(|&x| x > 0.0) {
            notes.push("weight b has no positive sample".to_string());
        }
        notes
    }

    pub fn scaled(&self, ka: f64, kb: f64) -> Self {
        Self::new(self.a.scaled(ka), self.b.scaled(kb)).expect("same grid")
    }
}

/// `(G, A, B)`: Dirichlet energy, concave weight integral and coupling
/// integral of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralTriple {
    /// `G = ∫|∇u|² + ∫|∇v|²`
    pub dirichlet: f64,
    /// `A = ∫ a (|u|^q + |v|^q)`
    pub concave: f64,
    /// `B = ∫ b |u|^α |v|^β`
    pub coupling: f64,
}

impl IntegralTriple {
    pub fn new(dirichlet: f64, concave: f64, coupling: f64) -> Self {
        Self {
            dirichlet,
            concave,
            coupling,
        }
    }

    /// Triple of the scaled state `t·(u, v)`.
    pub fn scaled(&self, t: f64, params: &Params) -> Self {
        Self {
            dirichlet: t * t * self.dirichlet,
            concave: t.powf(params.q) * self.concave,
            coupling: t.powf(params.degree()) * self.coupling,
        }
    }
}

#[inline]
fn pow_abs(x: f64, e: f64) -> f64 {
    x.abs().powf(e)
}

/// `sign(x)|x|^e`, continuous through zero for `e > 0`.
#[inline]
fn odd_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e)
    }
}

fn check_grid(weights: &Weights, state: &StatePair) {
    assert_eq!(
        weights.grid(),
        state.grid(),
        "weights and state live on different grids"
    );
}

pub fn integral_triple(weights: &Weights, params: &Params, state: &StatePair) -> IntegralTriple {
    check_grid(weights, state);
    let vol = state.grid().cell_volume();
    let (q, al, be) = (params.q, params.alpha, params.beta);
    let mut concave = 0.0;
    let mut coupling = 0.0;
    let nodes = weights
        .a
        .values()
        .iter()
        .zip(weights.b.values())
        .zip(state.u.values().iter().zip(state.v.values()));
    for ((&a, &b), (&u, &v)) in nodes {
        concave += a * (pow_abs(u, q) + pow_abs(v, q));
        coupling += b * pow_abs(u, al) * pow_abs(v, be);
    }
    IntegralTriple {
        dirichlet: dirichlet_energy(state),
        concave: vol * concave,
        coupling: vol * coupling,
    }
}

/// `J = G/2 - (λ/q) A - B/(α+β)` from a precomputed triple.
pub fn energy_from_triple(triple: &IntegralTriple, params: &Params) -> f64 {
    0.5 * triple.dirichlet
        - params.lambda / params.q * triple.concave
        - triple.coupling / params.degree()
}

/// The Euler functional `J_λ(u, v)`.
pub fn energy(weights: &Weights, params: &Params, state: &StatePair) -> f64 {
    energy_from_triple(&integral_triple(weights, params, state), params)
}

/// `⟨J'(u,v), (u,v)⟩ = G - λA - B`; zero exactly on the Nehari manifold.
pub fn nehari_constraint(triple: &IntegralTriple, params: &Params) -> f64 {
    triple.dirichlet - params.lambda * triple.concave - triple.coupling
}

/// The two expressions for `J` that hold on the Nehari manifold:
/// `(1/2 - 1/q) G + (1/q - 1/(α+β)) B` and
/// `(1/2 - 1/(α+β)) G - λ (1/q - 1/(α+β)) A`.
pub fn energy_identities(triple: &IntegralTriple, params: &Params) -> (f64, f64) {
    let inv_q = 1.0 / params.q;
    let inv_p = 1.0 / params.degree();
    let from_coupling = (0.5 - inv_q) * triple.dirichlet + (inv_q - inv_p) * triple.coupling;
    let from_concave =
        (0.5 - inv_p) * triple.dirichlet - params.lambda * (inv_q - inv_p) * triple.concave;
    (from_coupling, from_concave)
}

/// Right-hand sides of the system evaluated at `state`.
pub fn nonlinearity(weights: &Weights, params: &Params, state: &StatePair) -> StatePair {
    check_grid(weights, state);
    let (lam, q, al, be) = (params.lambda, params.q, params.alpha, params.beta);
    let p = params.degree();
    let grid = state.grid();
    let mut fu = Field::zeros(grid);
    let mut fv = Field::zeros(grid);
    let nodes = weights
        .a
        .values()
        .iter()
        .zip(weights.b.values())
        .zip(state.u.values().iter().zip(state.v.values()))
        .zip(fu.values_mut().iter_mut().zip(fv.values_mut()));
    for (((&a, &b), (&u, &v)), (ru, rv)) in nodes {
        *ru = lam * a * odd_pow(u, q - 1.0) + al / p * b * odd_pow(u, al - 1.0) * pow_abs(v, be);
        *rv = lam * a * odd_pow(v, q - 1.0) + be / p * b * odd_pow(v, be - 1.0) * pow_abs(u, al);
    }
    StatePair { u: fu, v: fv }
}

/// Strong-form residual `(-Δu - f_u, -Δv - f_v)`.
///
/// Paired with a direction in the quadrature inner product it gives the
/// directional derivative of [`energy`] exactly (up to rounding).
pub fn euler_residual(weights: &Weights, params: &Params, state: &StatePair) -> StatePair {
    let f = nonlinearity(weights, params, state);
    StatePair {
        u: apply_laplacian(&state.u).add_scaled(-1.0, &f.u),
        v: apply_laplacian(&state.v).add_scaled(-1.0, &f.v),
    }
}

/// `|x1|^e - |x0|^e` without cancellation when `x1 ≈ x0`.
fn pow_change(x0: f64, x1: f64, e: f64) -> f64 {
    let (x0, x1) = (x0.abs(), x1.abs());
    if x0 == 0.0 {
        return x1.powf(e);
    }
    x0.powf(e) * (e * ((x1 - x0) / x0).ln_1p()).exp_m1()
}

/// `|x1|^α|y1|^β - |x0|^α|y0|^β` without cancellation.
fn product_change(x0: f64, y0: f64, x1: f64, y1: f64, al: f64, be: f64) -> f64 {
    let (x0, y0, x1, y1) = (x0.abs(), y0.abs(), x1.abs(), y1.abs());
    if x0 == 0.0 || y0 == 0.0 {
        return x1.powf(al) * y1.powf(be);
    }
    let log_ratio = al * ((x1 - x0) / x0).ln_1p() + be * ((y1 - y0) / y0).ln_1p();
    x0.powf(al) * y0.powf(be) * log_ratio.exp_m1()
}

/// `J(new) - J(old)` accumulated node by node from the increments.
///
/// Near a critical point the change in `J` is far below the rounding
/// error of `J` itself; this form keeps it resolvable, which the
/// monotone line search depends on.
pub fn energy_difference(
    weights: &Weights,
    params: &Params,
    old: &StatePair,
    new: &StatePair,
) -> f64 {
    check_grid(weights, old);
    check_grid(weights, new);
    let (q, al, be) = (params.q, params.alpha, params.beta);
    let d_dirichlet = field_dirichlet_energy_change(&old.u, &new.u)
        + field_dirichlet_energy_change(&old.v, &new.v);
    let mut d_concave = 0.0;
    let mut d_coupling = 0.0;
    for k in 0..old.grid().node_count() {
        let (u0, v0) = (old.u.values()[k], old.v.values()[k]);
        let (u1, v1) = (new.u.values()[k], new.v.values()[k]);
        d_concave += weights.a.values()[k] * (pow_change(u0, u1, q) + pow_change(v0, v1, q));
        d_coupling += weights.b.values()[k] * product_change(u0, v0, u1, v1, al, be);
    }
    let vol = old.grid().cell_volume();
    0.5 * d_dirichlet
        - params.lambda / params.q * vol * d_concave
        - vol * d_coupling / params.degree()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    fn ones_setup() -> (Weights, Params, StatePair) {
        let g = Grid::new(1, 3).unwrap();
        let one = Field::from_fn(g, |_, _| 1.0);
        let w = Weights::new(one.clone(), one.clone()).unwrap();
        let p = Params::new(1.0, 1.5, 2.0, 2.0).unwrap();
        (w, p, StatePair::new(one.clone(), one).unwrap())
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(1.0, 2.5, 2.0, 2.0).is_err());
        assert!(Params::new(1.0, 1.0, 2.0, 2.0).is_err());
        assert!(Params::new(1.0, 1.5, 1.0, 2.0).is_err());
        assert!(Params::new(0.0, 1.5, 2.0, 2.0).is_err());
        let p = Params::new(1.0, 1.5, 2.0, 2.0).unwrap();
        assert_eq!(p.p_star(), 4.0 / 2.5);
    }

    #[test]
    fn triple_by_hand() {
        let (w, p, s) = ones_setup();
        let t = integral_triple(&w, &p, &s);
        // Nodal sums: A = 0.25 * 3 * (1 + 1), B = 0.25 * 3.
        assert!((t.dirichlet - 16.0).abs() < 1e-12);
        assert!((t.concave - 1.5).abs() < 1e-14);
        assert!((t.coupling - 0.75).abs() < 1e-14);
        let z = integral_triple(&w, &p, &StatePair::zeros(s.grid()));
        assert_eq!((z.dirichlet, z.concave, z.coupling), (0.0, 0.0, 0.0));
    }

    #[test]
    fn energy_by_hand() {
        let (w, p, s) = ones_setup();
        assert!((energy(&w, &p, &s) - 6.8125).abs() < 1e-12);
        assert_eq!(energy(&w, &p, &StatePair::zeros(s.grid())), 0.0);
        let t = integral_triple(&w, &p, &s);
        assert!((nehari_constraint(&t, &p) - 13.75).abs() < 1e-12);
        let (j1, j2) = energy_identities(&t, &p);
        // Off the manifold the identities do not reproduce J.
        assert!((j1 - 6.8125).abs() > 1.0);
        assert!((j2 - 6.8125).abs() > 1.0);
        let z = IntegralTriple::new(0.0, 0.0, 0.0);
        assert_eq!(energy_identities(&z, &p), (0.0, 0.0));
        assert_eq!(nehari_constraint(&z, &p), 0.0);
    }

    #[test]
    fn residual_of_zero_state() {
        let (w, p, s) = ones_setup();
        let r = euler_residual(&w, &p, &StatePair::zeros(s.grid()));
        assert_eq!(r.u.max_abs() + r.v.max_abs(), 0.0);
    }

    #[test]
    fn residual_vanishes_at_frozen_fixed_point() {
        // w = (-Δ)^{-1} f(u0, v0): the residual of (w, ·) against the frozen
        // right-hand side is the CG residual.
        let g = Grid::new(1, 63).unwrap();
        let w = Weights::new(
            WeightSpec::Sin2Pi.sample(g).unwrap(),
            Field::from_fn(g, |_, _| 1.0),
        )
        .unwrap();
        let p = Params::new(0.7, 1.4, 2.0, 3.0).unwrap();
        let pi = std::f64::consts::PI;
        let s0 = StatePair::new(
            Field::from_fn(g, |x, _| (pi * x).sin()),
            Field::from_fn(g, |x, _| x * (1.0 - x)),
        )
        .unwrap();
        let f = nonlinearity(&w, &p, &s0);
        let wu = crate::grid::riesz_solve(&f.u, 1e-12).unwrap();
        let r = apply_laplacian(&wu).add_scaled(-1.0, &f.u);
        assert!(r.dot(&r).sqrt() <= 1e-12 * f.u.dot(&f.u).sqrt());
    }

    #[test]
    fn weight_presets() {
        assert_eq!("sin2pi".parse::<WeightSpec>().unwrap(), WeightSpec::Sin2Pi);
        assert_eq!(
            "const:2.5".parse::<WeightSpec>().unwrap(),
            WeightSpec::Const(2.5)
        );
        assert_eq!(
            "step:0.3".parse::<WeightSpec>().unwrap(),
            WeightSpec::Step(0.3)
        );
        assert!("const:abc".parse::<WeightSpec>().is_err());
        for s in ["sin2pi", "const:-1", "step:0.25"] {
            assert_eq!(s.parse::<WeightSpec>().unwrap().to_string(), s);
        }
        let g = Grid::new(1, 9).unwrap();
        let a = WeightSpec::Step(0.5).sample(g).unwrap();
        assert_eq!(a.values()[0], 1.0);
        assert_eq!(a.values()[8], -1.0);
        let missing = WeightSpec::File("/nonexistent/weights.txt".into()).sample(g);
        assert!(missing.is_err());
    }

    #[test]
    fn weight_norms_and_diagnostics() {
        let g = Grid::new(1, 9).unwrap();
        let w = Weights::from_specs(g, &WeightSpec::Sin2Pi, &WeightSpec::Const(-1.0)).unwrap();
        assert!((w.a_sup() - (2.0 * std::f64::consts::PI * 0.3).sin()).abs() < 1e-15);
        assert_eq!(w.b_plus_sup(), 0.0);
        assert_eq!(w.diagnostics(), vec!["weight b has no positive sample"]);
    }

    fn arb_setup() -> impl Strategy<Value = (Weights, Params, StatePair, StatePair)> {
        (1usize..=2, 3usize..9).prop_flat_map(|(d, n)| {
            let g = Grid::new(d, n).unwrap();
            let len = g.node_count();
            let vec = move || prop::collection::vec(-1.0f64..1.0, len);
            (
                vec(),
                vec(),
                vec(),
                vec(),
                vec(),
                vec(),
                0.1f64..3.0,
                1.05f64..1.95,
                1.1f64..3.0,
                1.1f64..3.0,
            )
                .prop_map(move |(a, b, u, v, du, dv, lam, q, al, be)| {
                    let f = |x| Field::from_values(g, x).unwrap();
                    (
                        Weights::new(f(a), f(b)).unwrap(),
                        Params::new(lam, q, al, be).unwrap(),
                        StatePair::new(f(u), f(v)).unwrap(),
                        StatePair::new(f(du), f(dv)).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn triple_homogeneity((w, p, s, _) in arb_setup(), t in 0.1f64..10.0) {
            let base = integral_triple(&w, &p, &s);
            let scaled = integral_triple(&w, &p, &s.scaled(t));
            let expect = base.scaled(t, &p);
            prop_assert!(rel(scaled.dirichlet, expect.dirichlet) <= 1e-12);
            prop_assert!((scaled.concave - expect.concave).abs() <= 1e-12 * t.powf(p.q) * base.concave.abs().max(1e-3));
            prop_assert!((scaled.coupling - expect.coupling).abs() <= 1e-12 * t.powf(p.degree()) * base.coupling.abs().max(1e-3));
        }

        #[test]
        fn residual_is_the_gradient((w, p, s, dir) in arb_setup()) {
            // Keep the state away from zero so that |u|^{q-2}u is smooth
            // along the finite-difference stencil.
            let s = StatePair { u: s.u.map(|x| x + 2.0), v: s.v.map(|x| x - 2.0) };
            let r = euler_residual(&w, &p, &s);
            let pairing = (r.u.dot(&dir.u) + r.v.dot(&dir.v)) * s.grid().cell_volume();
            let eps = 1e-5;
            let fd = (energy(&w, &p, &s.add_scaled(eps, &dir)) - energy(&w, &p, &s.add_scaled(-eps, &dir))) / (2.0 * eps);
            let scale = pairing.abs().max(fd.abs()).max(1.0);
            prop_assert!((pairing - fd).abs() <= 1e-6 * scale, "pairing {} fd {}", pairing, fd);
        }

        #[test]
        fn accurate_difference_matches_direct((w, p, s, dir) in arb_setup(), step in 1e-3f64..1.0) {
            let new = s.add_scaled(step, &dir);
            let direct = energy(&w, &p, &new) - energy(&w, &p, &s);
            let accurate = energy_difference(&w, &p, &s, &new);
            let scale = energy(&w, &p, &s).abs().max(energy(&w, &p, &new).abs()).max(1.0);
            prop_assert!((direct - accurate).abs() <= 1e-11 * scale);
        }
    }
}
