//! Oracle suites: each one draws random samples, checks one invariant
//! against an independent computation and counts failures.
//!
//! The random generators are public so that test harnesses can draw from
//! the same distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::{
    energy, energy_identities, integral_triple, nehari_constraint, IntegralTriple, Params, Weights,
};
use crate::error::Result;
use crate::fibering::{
    classify_and_roots, m_peak, m_prime, m_value, phi, phi_prime, phi_second,
    phi_second_on_manifold_forms, project_to_nehari, FiberingCase, NehariClass,
};
use crate::grid::{Field, Grid, StatePair};
use crate::oracle::{fd_derivative, phi_direct, quadrature_triple, scan_fibering};
use crate::thresholds::{compute_thresholds, t_max_h, Thresholds};

/// Window and resolution of the dense `φ'` scan.
pub const SCAN_BOUNDS: (f64, f64) = (1e-6, 1e6);
pub const SCAN_COUNT: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checked: usize,
    pub failed: usize,
    /// Largest error seen, in the suite's own units.
    pub worst: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            failed: 0,
            worst: 0.0,
            notes: Vec::new(),
        }
    }

    /// Records one check whose error must not exceed `tol`.
    fn check(&mut self, error: f64, tol: f64) -> bool {
        self.checked += 1;
        self.worst = self.worst.max(error);
        let ok = error <= tol;
        if !ok {
            self.failed += 1;
        }
        ok
    }

    fn check_bool(&mut self, ok: bool) -> bool {
        self.check(if ok { 0.0 } else { 1.0 }, 0.0)
    }

    pub fn passed(&self) -> bool {
        self.failed == 0 && self.checked > 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn failed_invariants(&self) -> usize {
        self.suites.iter().filter(|s| !s.passed()).count()
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()
}

/// `q ∈ (1.05, 1.95)`, `α, β ∈ (1.05, 3)`, `λ` log-uniform on `[0.01, 10]`.
pub fn random_params(rng: &mut impl Rng) -> Params {
    let q = 1.05 + 0.9 * rng.random::<f64>();
    let alpha = 1.05 + 1.95 * rng.random::<f64>();
    let beta = 1.05 + 1.95 * rng.random::<f64>();
    let lambda = log_uniform(rng, 0.01, 10.0);
    Params::new(lambda, q, alpha, beta).expect("sampled parameters are in range")
}

/// `G` log-uniform on `[0.1, 10]`; `A` and `B` of random sign with
/// magnitudes log-uniform on `[0.01, 10]`.
pub fn random_triple(rng: &mut impl Rng) -> IntegralTriple {
    let signed = |rng: &mut ChaCha8Rng| {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        s * log_uniform(rng, 0.01, 10.0)
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    let g = log_uniform(&mut r, 0.1, 10.0);
    IntegralTriple::new(g, signed(&mut r), signed(&mut r))
}

/// A smooth random state: eight sine modes per component with coefficients
/// uniform on `[-1, 1]`, times an amplitude log-uniform on `[0.01, 100]`.
pub fn random_state(grid: Grid, rng: &mut impl Rng) -> StatePair {
    let amp = log_uniform(rng, 0.01, 100.0);
    let component = |rng: &mut _| {
        let coeffs: Vec<[f64; 2]> = (0..8)
            .map(|_| [2.0 * Rng::random::<f64>(rng) - 1.0, Rng::random::<f64>(rng)])
            .collect();
        let pi = std::f64::consts::PI;
        Field::from_fn(grid, |x, y| {
            let s: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c[0] * ((k + 1) as f64 * pi * x).sin())
                .sum();
            let t = if grid.dimension() == 2 {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (c[1] + 0.1) * ((k + 1) as f64 * pi * y).sin())
                    .sum()
            } else {
                1.0
            };
            amp * s * t
        })
    };
    let u = component(rng);
    let v = component(rng);
    StatePair { u, v }
}

/// `φ'(t) = t^{q-1}(m(t) - λA)` on random samples.
pub fn master_identity(samples: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SuiteReport::new("master_identity");
    for _ in 0..samples {
        let params = random_params(&mut rng);
        let triple = random_triple(&mut rng);
        let t = log_uniform(&mut rng, 0.25, 4.0);
        let lhs = phi_prime(t, &triple, &params);
        let rhs = t.powf(params.q - 1.0)
            * (m_value(t, &triple, &params) - params.lambda * triple.concave);
        s.check((lhs - rhs).abs() / lhs.abs().max(1.0), 1e-12);
    }
    s
}

/// Central differences (step `1e-5`) of `φ` and `φ'` against the closed forms,
/// and the closed-form `φ` against the oracle's own arithmetic.
pub fn derivative_chain(samples: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SuiteReport::new("derivative_chain");
    let step = 1e-5;
    for _ in 0..samples {
        let params = random_params(&mut rng);
        let triple = random_triple(&mut rng);
        let t = log_uniform(&mut rng, 0.25, 4.0);
        let d1 = fd_derivative(|x| phi(x, &triple, &params), t, step).expect("t > step");
        let d2 = fd_derivative(|x| phi_prime(x, &triple, &params), t, step).expect("t > step");
        let (first, second) = term_sizes(t, &triple, &params);
        s.check(fd_rel(d1, phi_prime(t, &triple, &params), first), 1e-6);
        s.check(fd_rel(d2, phi_second(t, &triple, &params), second), 1e-6);
        let direct = phi_direct(
            t,
            triple.dirichlet,
            triple.concave,
            triple.coupling,
            params.lambda,
            params.q,
            params.degree(),
        );
        s.check(rel_err(direct, phi(t, &triple, &params)), 1e-12);
    }
    s
}

/// Relative error of a finite-difference value. The denominator is floored
/// at `1e-3` times the summed magnitude of the derivative's terms, so that a
/// derivative which happens to cancel near zero does not turn rounding into
/// a failure.
fn fd_rel(fd: f64, exact: f64, terms: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(terms * 1e-3).max(f64::MIN_POSITIVE)
}

fn term_sizes(t: f64, triple: &IntegralTriple, params: &Params) -> (f64, f64) {
    let (q, p, l) = (params.q, params.degree(), params.lambda);
    let (g, a, b) = (
        triple.dirichlet,
        triple.concave.abs(),
        triple.coupling.abs(),
    );
    let first = t * g + l * t.powf(q - 1.0) * a + t.powf(p - 1.0) * b;
    let second = g + (q - 1.0) * l * t.powf(q - 2.0) * a + (p - 1.0) * t.powf(p - 2.0) * b;
    (first, second)
}

/// `integral_triple` against the oracle's explicit loops.
pub fn quadrature(weights: &Weights, params: &Params, samples: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SuiteReport::new("quadrature_triple");
    for _ in 0..samples {
        let state = random_state(weights.grid(), &mut rng);
        let a = integral_triple(weights, params, &state);
        let b = quadrature_triple(weights, params, &state.u, &state.v);
        let scale = a.dirichlet;
        s.check((a.dirichlet - b.dirichlet).abs() / scale, 1e-12);
        s.check(rel_err(a.concave, b.concave), 1e-10);
        s.check(rel_err(a.coupling, b.coupling), 1e-10);
    }
    s
}

/// Projected random states: both on-manifold energy expressions equal `J`,
/// and the constraint holds to `1e-10 G`.
pub fn energy_identities_suite(
    weights: &Weights,
    params: &Params,
    samples: usize,
    seed: u64,
) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SuiteReport::new("energy_identities");
    let mut absent = 0;
    for k in 0..samples {
        let branch = if k % 2 == 0 {
            NehariClass::Plus
        } else {
            NehariClass::Minus
        };
        let state = random_state(weights.grid(), &mut rng);
        let Ok(p) = project_to_nehari(weights, params, &state, branch) else {
            absent += 1;
            continue;
        };
        let j = energy(weights, params, &p.state);
        let (j1, j2) = energy_identities(&p.triple, params);
        s.check(rel_err(j1, j), 1e-10);
        s.check(rel_err(j2, j), 1e-10);
        s.check(
            nehari_constraint(&p.triple, params).abs() / p.triple.dirichlet,
            1e-10,
        );
    }
    if absent > 0 {
        s.notes.push(format!(
            "{absent} samples had no root on the requested branch"
        ));
    }
    s
}

/// Expected root classes of the quadrant table for a non-degenerate sample.
pub fn expected_roots(triple: &IntegralTriple, params: &Params) -> Vec<NehariClass> {
    match (triple.concave > 0.0, triple.coupling > 0.0) {
        (false, false) => vec![],
        (true, false) => vec![NehariClass::Plus],
        (false, true) => vec![NehariClass::Minus],
        (true, true) => {
            let (_, top) = m_peak(triple, params).expect("B > 0");
            if params.lambda * triple.concave < top {
                vec![NehariClass::Plus, NehariClass::Minus]
            } else {
                vec![]
            }
        }
    }
}

/// A non-degenerate random sample whose roots all fall well inside the scan
/// window. Returns the number of rejected draws alongside.
pub fn random_classifiable(rng: &mut impl Rng) -> (IntegralTriple, Params, usize) {
    let mut rejected = 0;
    loop {
        let params = random_params(rng);
        let triple = random_triple(rng);
        let Ok(geometry) = classify_and_roots(&triple, &params) else {
            rejected += 1;
            continue;
        };
        let (lo, hi) = SCAN_BOUNDS;
        let inside = geometry
            .roots
            .iter()
            .all(|r| r.t > 10.0 * lo && r.t < hi / 10.0);
        if geometry.case == FiberingCase::Degenerate || !inside {
            rejected += 1;
            continue;
        }
        return (triple, params, rejected);
    }
}

/// Quadrant-table root counts against the dense scan, plus the curvature
/// identity `φ''_{t·s}(1) = t^{q+1} m'(t)` at every root and agreement of
/// the two on-manifold forms of `φ''(1)`.
pub fn quadrant_table(samples: usize, seed: u64) -> [SuiteReport; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = SuiteReport::new("quadrant_table");
    let mut curvature = SuiteReport::new("root_curvature");
    let mut rejected = 0;
    for _ in 0..samples {
        let (triple, params, r) = random_classifiable(&mut rng);
        rejected += r;
        let geometry = classify_and_roots(&triple, &params).expect("checked by the sampler");
        let classes: Vec<NehariClass> = geometry.roots.iter().map(|r| r.class).collect();
        let scan = scan_fibering(&triple, &params, SCAN_BOUNDS, SCAN_COUNT).expect("valid scan");
        let bracketed = scan.brackets.len() == geometry.roots.len()
            && scan
                .brackets
                .iter()
                .zip(&geometry.roots)
                .all(|(&(lo, hi), r)| lo * (1.0 - 1e-12) <= r.t && r.t <= hi * (1.0 + 1e-12));
        table.check_bool(classes == expected_roots(&triple, &params) && bracketed);
        for root in &geometry.roots {
            let on = triple.scaled(root.t, &params);
            let lhs = phi_second(1.0, &on, &params);
            let rhs = root.t.powf(params.q + 1.0) * m_prime(root.t, &triple, &params);
            curvature.check(rel_err(lhs, rhs), 1e-10);
            let (f1, f2) = phi_second_on_manifold_forms(&on, &params);
            curvature.check(rel_err(f1, f2), 1e-12);
        }
    }
    table.notes.push(format!(
        "{rejected} degenerate or out-of-window draws skipped"
    ));
    [table, curvature]
}

/// Random states at `0.9 λ₁`: `φ(t_max) > 0` whenever `B > 0`, no
/// degenerate geometry, and every `M⁻` projection has `J ≥ δ₁`.
pub fn threshold_guarantee(
    weights: &Weights,
    exponents: &Params,
    thresholds: &Thresholds,
    samples: usize,
    seed: u64,
) -> Result<[SuiteReport; 2]> {
    let params = exponents.with_lambda(0.9 * thresholds.lambda1)?;
    let floor = thresholds.delta1(params.lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut geometry = SuiteReport::new("threshold_geometry");
    let mut gap = SuiteReport::new("minus_energy_gap");
    for _ in 0..samples {
        let state = random_state(weights.grid(), &mut rng);
        let triple = integral_triple(weights, &params, &state);
        let g = classify_and_roots(&triple, &params)?;
        geometry.check_bool(g.case != FiberingCase::Degenerate);
        if triple.coupling > 0.0 {
            let (t_max, _) = t_max_h(&triple, &params)?;
            geometry.check_bool(phi(t_max, &triple, &params) > 0.0);
            let p = project_to_nehari(weights, &params, &state, NehariClass::Minus)?;
            gap.check_bool(floor > 0.0 && energy(weights, &params, &p.state) >= floor);
        }
    }
    Ok([geometry, gap])
}

/// Empirical coercivity on the manifold: for random states the concave
/// integral obeys the embedding bound
/// `A ≤ ‖a‖∞ 2^{1-q/2} S_q^q G^{q/2}`, so on `M` the energy satisfies
/// `J ≥ (1/2-1/p) G - λ(1/q-1/p) ‖a‖∞ 2^{1-q/2} S_q^q G^{q/2}`.
pub fn coercivity(
    weights: &Weights,
    exponents: &Params,
    thresholds: &Thresholds,
    samples: usize,
    seed: u64,
) -> Result<SuiteReport> {
    let params = exponents.with_lambda(0.9 * thresholds.lambda1)?;
    let (q, p) = (params.q, params.degree());
    let k = weights.a_sup() * 2f64.powf(1.0 - q / 2.0) * thresholds.s_q.powf(q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SuiteReport::new("coercivity");
    for n in 0..samples {
        let state = random_state(weights.grid(), &mut rng);
        let triple = integral_triple(weights, &params, &state);
        let bound = k * triple.dirichlet.powf(q / 2.0);
        s.check_bool(triple.concave <= bound * (1.0 + 1e-9));
        let branch = if n % 2 == 0 {
            NehariClass::Plus
        } else {
            NehariClass::Minus
        };
        if let Ok(proj) = project_to_nehari(weights, &params, &state, branch) {
            let g = proj.triple.dirichlet;
            let lower =
                (0.5 - 1.0 / p) * g - params.lambda * (1.0 / q - 1.0 / p) * k * g.powf(q / 2.0);
            let j = energy(weights, &params, &proj.state);
            s.check_bool(j >= lower - 1e-9 * j.abs().max(1.0));
        }
    }
    Ok(s)
}

/// Sample counts of [`run_all`].
#[derive(Debug, Clone, Copy)]
pub struct SuiteSizes {
    pub identity: usize,
    pub derivatives: usize,
    pub states: usize,
    pub quadrants: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            identity: 1000,
            derivatives: 200,
            states: 100,
            quadrants: 500,
        }
    }
}

/// Every suite, with states drawn on the weights' grid. `params.lambda` is
/// used for the projection suites; the threshold suites recompute `λ₁`.
pub fn run_all(
    weights: &Weights,
    params: &Params,
    seed: u64,
    sizes: SuiteSizes,
) -> Result<VerifyReport> {
    let thresholds = compute_thresholds(weights, params, seed)?;
    let mut suites = vec![
        master_identity(sizes.identity, seed),
        derivative_chain(sizes.derivatives, seed.wrapping_add(1)),
        quadrature(weights, params, sizes.states / 4 + 1, seed.wrapping_add(2)),
        energy_identities_suite(weights, params, sizes.states, seed.wrapping_add(3)),
    ];
    suites.extend(quadrant_table(sizes.quadrants, seed.wrapping_add(4)));
    suites.extend(threshold_guarantee(
        weights,
        params,
        &thresholds,
        sizes.states,
        seed.wrapping_add(5),
    )?);
    suites.push(coercivity(
        weights,
        params,
        &thresholds,
        sizes.states,
        seed.wrapping_add(6),
    )?);
    Ok(VerifyReport { suites })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::WeightSpec;

    fn assert_passed(s: &SuiteReport) {
        assert!(s.passed(), "{s:?}");
    }

    #[test]
    fn pure_suites() {
        assert_passed(&master_identity(300, 1));
        assert_passed(&derivative_chain(100, 2));
        for s in quadrant_table(60, 3) {
            assert_passed(&s);
        }
    }

    #[test]
    fn grid_suites() {
        let grid = Grid::new(1, 61).unwrap();
        let one = WeightSpec::Const(1.0);
        let w = Weights::from_specs(grid, &WeightSpec::Sin2Pi, &one).unwrap();
        let p = Params::new(1.0, 1.5, 2.0, 2.0).unwrap();
        let sizes = SuiteSizes {
            identity: 50,
            derivatives: 20,
            states: 20,
            quadrants: 20,
        };
        let report = run_all(&w, &p, 9, sizes).unwrap();
        for s in &report.suites {
            assert_passed(s);
        }
        assert_eq!(report.failed_invariants(), 0);
    }

    #[test]
    fn expected_roots_table() {
        let p = Params::new(0.3, 1.5, 2.0, 2.0).unwrap();
        let t = |a, b| IntegralTriple::new(1.0, a, b);
        assert!(expected_roots(&t(-1.0, -1.0), &p).is_empty());
        assert_eq!(expected_roots(&t(1.0, -1.0), &p), [NehariClass::Plus]);
        assert_eq!(expected_roots(&t(-1.0, 1.0), &p), [NehariClass::Minus]);
        assert_eq!(expected_roots(&t(1.0, 1.0), &p).len(), 2);
        assert!(expected_roots(&t(2.0, 1.0), &p).is_empty());
    }
}
