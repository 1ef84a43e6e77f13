//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and strings and returns a JSON string;
//! failures come back as `{"error": "..."}` rather than exceptions.

use nehari_core::energy::{integral_triple, IntegralTriple, Params, WeightSpec, Weights};
use nehari_core::fibering::{classify_and_roots, phi};
use nehari_core::solver::{lambda_sweep, solve_dual, SolveOptions};
use nehari_core::thresholds::compute_thresholds;
use nehari_core::Grid;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn respond<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v)
            .unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
struct Curve {
    t: Vec<f64>,
    phi: Vec<f64>,
    case: String,
    roots: Vec<(f64, String)>,
}

/// Samples `φ(t)` on `[0, t_max]` for a given `(G, A, B)` and classifies it.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn fibering_curve(
    g: f64,
    a: f64,
    b: f64,
    lambda: f64,
    q: f64,
    alpha: f64,
    beta: f64,
    t_max: f64,
    samples: usize,
) -> String {
    respond((|| {
        let params = Params::new(lambda, q, alpha, beta).map_err(|e| e.to_string())?;
        let triple = IntegralTriple::new(g, a, b);
        let geometry = classify_and_roots(&triple, &params).map_err(|e| e.to_string())?;
        let samples = samples.clamp(2, 5000);
        let t: Vec<f64> = (0..samples)
            .map(|i| t_max * i as f64 / (samples - 1) as f64)
            .collect();
        Ok(Curve {
            phi: t.iter().map(|&x| phi(x, &triple, &params)).collect(),
            t,
            case: format!("{:?}", geometry.case),
            roots: geometry
                .roots
                .iter()
                .map(|r| (r.t, format!("{:?}", r.class)))
                .collect(),
        })
    })())
}

fn setup(
    n: usize,
    weight_a: &str,
    q: f64,
    alpha: f64,
    beta: f64,
) -> Result<(Weights, Params, f64), String> {
    let grid = Grid::new(1, n).map_err(|e| e.to_string())?;
    let a: WeightSpec = weight_a
        .parse()
        .map_err(|e: nehari_core::Error| e.to_string())?;
    if matches!(a, WeightSpec::File(_)) {
        return Err(format!("unknown weight preset `{weight_a}`"));
    }
    let weights =
        Weights::from_specs(grid, &a, &WeightSpec::Const(1.0)).map_err(|e| e.to_string())?;
    let exponents = Params::exponents(q, alpha, beta).map_err(|e| e.to_string())?;
    let th = compute_thresholds(&weights, &exponents, 0).map_err(|e| e.to_string())?;
    Ok((weights, exponents, th.lambda1))
}

#[derive(Serialize)]
struct Branch {
    converged: bool,
    energy: Option<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Serialize)]
struct Dual {
    x: Vec<f64>,
    lambda: f64,
    lambda1: f64,
    /// Initial triple of the `Plus` start, for the fibering panel.
    triple: IntegralTriple,
    complete: bool,
    plus: Branch,
    minus: Branch,
    warnings: Vec<String>,
}

/// Both branch solutions on the unit interval with `b ≡ 1` at
/// `λ = fraction · λ₁`.
#[wasm_bindgen]
pub fn solve_interval(
    n: usize,
    weight_a: &str,
    fraction: f64,
    q: f64,
    alpha: f64,
    beta: f64,
) -> String {
    respond((|| {
        let n = n.clamp(5, 801);
        let (weights, exponents, lambda1) = setup(n, weight_a, q, alpha, beta)?;
        let params = exponents
            .with_lambda(fraction * lambda1)
            .map_err(|e| e.to_string())?;
        let dual = solve_dual(&weights, &params, &SolveOptions::default(), Some(lambda1));
        let branch = |o: &nehari_core::solver::BranchOutcome| match o.report() {
            Some(r) => Branch {
                converged: r.converged,
                energy: Some(r.j_value),
                u: r.state.u.values().to_vec(),
                v: r.state.v.values().to_vec(),
            },
            None => Branch {
                converged: false,
                energy: None,
                u: vec![],
                v: vec![],
            },
        };
        let grid = weights.grid();
        let init =
            nehari_core::solver::default_initializer(&weights, nehari_core::NehariClass::Plus);
        Ok(Dual {
            x: (0..grid.node_count()).map(|k| grid.coords(k)[0]).collect(),
            lambda: params.lambda,
            lambda1,
            triple: integral_triple(&weights, &params, &init),
            complete: dual.complete,
            plus: branch(&dual.plus),
            minus: branch(&dual.minus),
            warnings: dual.warnings,
        })
    })())
}

#[derive(Serialize)]
struct Sweep {
    lambda1: f64,
    rows: Vec<nehari_core::solver::SweepRow>,
}

/// Energies of both branches over `count` evenly spaced fractions of `λ₁`
/// in `(0, max_fraction]`.
#[wasm_bindgen]
pub fn sweep_interval(
    n: usize,
    weight_a: &str,
    q: f64,
    alpha: f64,
    beta: f64,
    max_fraction: f64,
    count: usize,
) -> String {
    respond((|| {
        let n = n.clamp(5, 401);
        let count = count.clamp(1, 40);
        let (weights, exponents, lambda1) = setup(n, weight_a, q, alpha, beta)?;
        let lambdas: Vec<f64> = (1..=count)
            .map(|k| max_fraction * lambda1 * k as f64 / count as f64)
            .collect();
        let rows = lambda_sweep(
            &weights,
            &exponents,
            &lambdas,
            &SolveOptions::default(),
            Some(lambda1),
        )
        .map_err(|e| e.to_string())?;
        Ok(Sweep { lambda1, rows })
    })())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn curve_has_two_roots() {
        let v = parse(fibering_curve(1.0, 1.0, 1.0, 0.3, 1.5, 2.0, 2.0, 1.2, 100));
        assert_eq!(v["case"], "MinThenMax");
        assert_eq!(v["roots"].as_array().unwrap().len(), 2);
        assert_eq!(v["t"].as_array().unwrap().len(), 100);
    }

    #[test]
    fn errors_are_json() {
        let v = parse(fibering_curve(1.0, 1.0, 1.0, 0.3, 2.5, 2.0, 2.0, 1.0, 10));
        assert!(v["error"].as_str().unwrap().contains('q'));
        let v = parse(solve_interval(41, "somefile.txt", 0.5, 1.5, 2.0, 2.0));
        assert!(v["error"].is_string());
    }

    #[test]
    fn interval_solve_and_sweep() {
        let v = parse(solve_interval(41, "sin2pi", 0.5, 1.5, 2.0, 2.0));
        assert_eq!(v["complete"], true);
        assert!(v["plus"]["energy"].as_f64().unwrap() < 0.0);
        let v = parse(sweep_interval(31, "const:1", 1.5, 2.0, 2.0, 0.9, 3));
        assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    }
}
