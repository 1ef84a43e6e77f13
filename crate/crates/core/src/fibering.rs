//! Fibering maps `φ(t) = J(tu, tv)` and projection onto the Nehari manifold.
//!
//! All formulas depend on the state only through its [`IntegralTriple`]
//! `(G, A, B)`. Critical points of `φ` are the roots of
//! `m(t) = t^{2-q} G - t^{α+β-q} B = λA`, because
//! `φ'(t) = t^{q-1} (m(t) - λA)`; at such a root the rescaled state has
//! `φ''(1) = t^{q+1} m'(t)`, so the sign of `m'` decides the branch.

use serde::{Deserialize, Serialize};

use crate::energy::{integral_triple, nehari_constraint, IntegralTriple, Params, Weights};
use crate::error::{Error, Result};
use crate::grid::StatePair;

/// Relative band around `m_peak` inside which `λA = m_peak` is treated as
/// an inflection (the `M⁰` case).
pub const DEGENERACY_TOL: f64 = 1e-9;

/// How far off the manifold a triple may be before the on-manifold form of
/// `φ''(1)` is refused (relative to `max(G, |λA|, |B|)`).
pub const MANIFOLD_TOL: f64 = 1e-8;

/// Relative accuracy of returned roots in `t`.
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NehariClass {
    Plus,
    Minus,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FiberingCase {
    #[serde(rename = "NoCritical_Increasing")]
    NoCriticalIncreasing,
    UniqueMin,
    UniqueMax,
    MinThenMax,
    #[serde(rename = "NoCritical_Decreasing")]
    NoCriticalDecreasing,
    /// `λA` sits on the peak of `m`: a single inflection root.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberingRoot {
    pub t: f64,
    pub class: NehariClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberingGeometry {
    pub case: FiberingCase,
    pub roots: Vec<FiberingRoot>,
    /// Maximiser of `m` (only when `B > 0`).
    pub t_star: Option<f64>,
    pub m_peak: Option<f64>,
}

impl FiberingGeometry {
    pub fn root(&self, class: NehariClass) -> Option<FiberingRoot> {
        self.roots.iter().copied().find(|r| r.class == class)
    }
}

pub fn phi(t: f64, triple: &IntegralTriple, params: &Params) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let p = params.degree();
    0.5 * t * t * triple.dirichlet
        - params.lambda * t.powf(params.q) / params.q * triple.concave
        - t.powf(p) / p * triple.coupling
}

pub fn phi_prime(t: f64, triple: &IntegralTriple, params: &Params) -> f64 {
    t * triple.dirichlet
        - params.lambda * t.powf(params.q - 1.0) * triple.concave
        - t.powf(params.degree() - 1.0) * triple.coupling
}

pub fn phi_second(t: f64, triple: &IntegralTriple, params: &Params) -> f64 {
    let p = params.degree();
    triple.dirichlet
        - (params.q - 1.0) * params.lambda * t.powf(params.q - 2.0) * triple.concave
        - (p - 1.0) * t.powf(p - 2.0) * triple.coupling
}

/// Both on-manifold forms of `φ''(1)`:
/// `(2-q) G - (α+β-q) B` and `(2-(α+β)) G + (α+β-q) λA`.
///
/// They coincide only when `G - λA - B = 0`; no check is made here.
pub fn phi_second_on_manifold_forms(triple: &IntegralTriple, params: &Params) -> (f64, f64) {
    let (q, p) = (params.q, params.degree());
    let from_coupling = (2.0 - q) * triple.dirichlet - (p - q) * triple.coupling;
    let from_concave = (2.0 - p) * triple.dirichlet + (p - q) * params.lambda * triple.concave;
    (from_coupling, from_concave)
}

/// `φ''(1)` of a state on the Nehari manifold, `(2-q) G - (α+β-q) B`.
pub fn phi_second_on_manifold(triple: &IntegralTriple, params: &Params) -> Result<f64> {
    let residual = nehari_constraint(triple, params);
    let scale = triple
        .dirichlet
        .max((params.lambda * triple.concave).abs())
        .max(triple.coupling.abs());
    if residual.abs() > MANIFOLD_TOL * scale {
        return Err(Error::OffManifold { residual });
    }
    Ok(phi_second_on_manifold_forms(triple, params).0)
}

/// `m(t) = t^{2-q} G - t^{α+β-q} B`.
pub fn m_value(t: f64, triple: &IntegralTriple, params: &Params) -> f64 {
    let q = params.q;
    t.powf(2.0 - q) * triple.dirichlet - t.powf(params.degree() - q) * triple.coupling
}

pub fn m_prime(t: f64, triple: &IntegralTriple, params: &Params) -> f64 {
    let (q, p) = (params.q, params.degree());
    (2.0 - q) * t.powf(1.0 - q) * triple.dirichlet - (p - q) * t.powf(p - q - 1.0) * triple.coupling
}

/// Maximiser and maximum of `m` when `B > 0`.
pub fn m_peak(triple: &IntegralTriple, params: &Params) -> Option<(f64, f64)> {
    if triple.coupling <= 0.0 || triple.dirichlet <= 0.0 {
        return None;
    }
    let (q, p) = (params.q, params.degree());
    let t_star = ((2.0 - q) * triple.dirichlet / ((p - q) * triple.coupling)).powf(1.0 / (p - 2.0));
    Some((t_star, m_value(t_star, triple, params)))
}

/// Root of `m(t) = level` inside `[lo, hi]`, where `m - level` changes sign.
///
/// Geometric bisection down to a relative width of 1e-6, then Newton steps
/// that fall back to bisection whenever they leave the bracket.
fn refine_root(triple: &IntegralTriple, params: &Params, level: f64, lo: f64, hi: f64) -> f64 {
    let f = |t: f64| m_value(t, triple, params) - level;
    let (mut lo, mut hi) = (lo, hi);
    let f_lo = f(lo);
    if f_lo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    let lo_negative = f_lo < 0.0;
    let update = |t: f64, ft: f64, lo: &mut f64, hi: &mut f64| {
        if (ft < 0.0) == lo_negative {
            *lo = t;
        } else {
            *hi = t;
        }
    };
    while hi / lo - 1.0 > 1e-6 {
        let mid = (lo * hi).sqrt();
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        update(mid, fm, &mut lo, &mut hi);
    }
    let mut t = (lo * hi).sqrt();
    for _ in 0..100 {
        let ft = f(t);
        if ft == 0.0 {
            return t;
        }
        update(t, ft, &mut lo, &mut hi);
        let slope = m_prime(t, triple, params);
        let mut next = t - ft / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - t).abs();
        t = next;
        if step <= ROOT_TOL * 1e-3 * t || hi - lo <= 1e-15 * t {
            break;
        }
    }
    t
}

/// Halves `t` until `m(t) - level < 0` (used below the first root).
fn lower_bracket(triple: &IntegralTriple, params: &Params, level: f64, start: f64) -> f64 {
    let mut t = start;
    while m_value(t, triple, params) - level >= 0.0 && t > f64::MIN_POSITIVE {
        t *= 0.5;
    }
    t
}

/// Doubles `t` until `m(t) - level < 0` (used beyond the last root).
fn upper_bracket(triple: &IntegralTriple, params: &Params, level: f64, t_star: f64) -> f64 {
    let p = params.degree();
    let mut t =
        (2.0 * t_star).max(2.0 * (2.0 * triple.dirichlet / triple.coupling).powf(1.0 / (p - 2.0)));
    while m_value(t, triple, params) - level >= 0.0 && t < f64::MAX / 4.0 {
        t *= 2.0;
    }
    t
}

fn classify_root(t: f64, triple: &IntegralTriple, params: &Params) -> FiberingRoot {
    let slope = m_prime(t, triple, params);
    let class = if slope > 0.0 {
        NehariClass::Plus
    } else if slope < 0.0 {
        NehariClass::Minus
    } else {
        NehariClass::Zero
    };
    FiberingRoot { t, class }
}

/// Case analysis of the fibering map by the signs of `A` and `B`.
pub fn classify_and_roots(triple: &IntegralTriple, params: &Params) -> Result<FiberingGeometry> {
    let g = triple.dirichlet;
    if !(g > 0.0) {
        return Err(Error::ZeroState);
    }
    let level = params.lambda * triple.concave;
    let (a_pos, b_pos) = (triple.concave > 0.0, triple.coupling > 0.0);
    let peak = m_peak(triple, params);
    let (t_star, m_top) = match peak {
        Some((t, m)) => (Some(t), Some(m)),
        None => (None, None),
    };
    let geometry = |case, roots| FiberingGeometry {
        case,
        roots,
        t_star,
        m_peak: m_top,
    };

    match (a_pos, b_pos) {
        (false, false) => Ok(geometry(FiberingCase::NoCriticalIncreasing, vec![])),
        (true, false) => {
            // m is increasing and dominated from below by t^{2-q} G, so the
            // root of the leading term bounds the root from above.
            let hi = (level / g).powf(1.0 / (2.0 - params.q));
            let hi = if m_value(hi, triple, params) - level > 0.0 {
                hi
            } else {
                let mut t = hi;
                while m_value(t, triple, params) - level <= 0.0 {
                    t *= 2.0;
                }
                t
            };
            let lo = lower_bracket(triple, params, level, hi);
            let t = refine_root(triple, params, level, lo, hi);
            Ok(geometry(
                FiberingCase::UniqueMin,
                vec![FiberingRoot {
                    t,
                    class: NehariClass::Plus,
                }],
            ))
        }
        (false, true) => {
            let (t_star, _) = peak.expect("B > 0");
            let zero = (g / triple.coupling).powf(1.0 / (params.degree() - 2.0));
            let t = if level == 0.0 {
                refine_root(triple, params, 0.0, zero * 0.5, zero * 2.0)
            } else {
                let hi = upper_bracket(triple, params, level, t_star);
                refine_root(triple, params, level, zero, hi)
            };
            Ok(geometry(
                FiberingCase::UniqueMax,
                vec![FiberingRoot {
                    t,
                    class: NehariClass::Minus,
                }],
            ))
        }
        (true, true) => {
            let (t_star, top) = peak.expect("B > 0");
            if (level - top).abs() <= DEGENERACY_TOL * top.max(1.0) {
                return Ok(geometry(
                    FiberingCase::Degenerate,
                    vec![FiberingRoot {
                        t: t_star,
                        class: NehariClass::Zero,
                    }],
                ));
            }
            if level > top {
                return Ok(geometry(FiberingCase::NoCriticalDecreasing, vec![]));
            }
            let lo = lower_bracket(triple, params, level, t_star);
            let t1 = refine_root(triple, params, level, lo, t_star);
            let hi = upper_bracket(triple, params, level, t_star);
            let t2 = refine_root(triple, params, level, t_star, hi);
            let mut r1 = classify_root(t1, triple, params);
            let mut r2 = classify_root(t2, triple, params);
            // Outside the degenerate band the sign of m' is fixed by the side
            // of the peak; rounding cannot be allowed to flip it.
            r1.class = NehariClass::Plus;
            r2.class = NehariClass::Minus;
            Ok(geometry(FiberingCase::MinThenMax, vec![r1, r2]))
        }
    }
}

/// A state rescaled onto one branch of the Nehari manifold.
#[derive(Debug, Clone)]
pub struct Projection {
    pub state: StatePair,
    /// Scale factor applied to the input state.
    pub t: f64,
    pub class: NehariClass,
    /// Triple of the rescaled state.
    pub triple: IntegralTriple,
    /// Geometry of the input ray.
    pub geometry: FiberingGeometry,
}

/// Rescales `state` onto the requested branch of its ray.
pub fn project_to_nehari(
    weights: &Weights,
    params: &Params,
    state: &StatePair,
    branch: NehariClass,
) -> Result<Projection> {
    let triple = integral_triple(weights, params, state);
    let geometry = classify_and_roots(&triple, params)?;
    let Some(root) = geometry
        .root(branch)
        .filter(|_| branch != NehariClass::Zero)
    else {
        return Err(Error::BranchAbsent {
            requested: branch,
            actual: geometry.case,
        });
    };
    let mut t = root.t;
    let mut scaled = state.scaled(t);
    let mut scaled_triple = integral_triple(weights, params, &scaled);
    // Rounding in the rescaled sums can leave a residual above the target;
    // a second pass on the nearly-projected state removes it.
    for _ in 0..2 {
        let residual = nehari_constraint(&scaled_triple, params);
        if residual.abs() <= 1e-12 * scaled_triple.dirichlet {
            break;
        }
        let again = classify_and_roots(&scaled_triple, params)?;
        let Some(fix) = again.root(branch) else { break };
        t *= fix.t;
        scaled = state.scaled(t);
        scaled_triple = integral_triple(weights, params, &scaled);
    }
    Ok(Projection {
        state: scaled,
        t,
        class: branch,
        triple: scaled_triple,
        geometry,
    })
}
