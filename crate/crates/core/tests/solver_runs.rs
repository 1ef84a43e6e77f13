use nehari_core::fibering::NehariClass;
use nehari_core::solver::{
    default_initializer, lambda_sweep, minimize_on_branch, solve_dual, BranchOutcome, SolveOptions,
};
use nehari_core::thresholds::compute_thresholds;
use nehari_core::{Grid, Params, WeightSpec, Weights};
use proptest::prelude::*;

fn setup(n: usize, a: WeightSpec) -> (Weights, Params, f64) {
    let grid = Grid::new(1, n).unwrap();
    let w = Weights::from_specs(grid, &a, &WeightSpec::Const(1.0)).unwrap();
    let e = Params::exponents(1.5, 2.0, 2.0).unwrap();
    let th = compute_thresholds(&w, &e, 0).unwrap();
    (w, e, th.lambda1)
}

#[test]
fn plus_negative_minus_above_gap() {
    let grid = Grid::new(1, 201).unwrap();
    let one = WeightSpec::Const(1.0);
    let w = Weights::from_specs(grid, &one, &one).unwrap();
    let e = Params::exponents(1.5, 2.0, 2.0).unwrap();
    let th = compute_thresholds(&w, &e, 0).unwrap();
    let p = e.with_lambda(0.5 * th.lambda1).unwrap();
    let opts = SolveOptions::default();
    let plus = minimize_on_branch(
        &w,
        &p,
        NehariClass::Plus,
        &default_initializer(&w, NehariClass::Plus),
        &opts,
    )
    .unwrap();
    assert!(plus.converged && plus.j_value < 0.0);
    let minus = minimize_on_branch(
        &w,
        &p,
        NehariClass::Minus,
        &default_initializer(&w, NehariClass::Minus),
        &opts,
    )
    .unwrap();
    assert!(minus.converged);
    assert!(minus.j_value >= th.delta1(p.lambda) && th.delta1(p.lambda) > 0.0);
}

#[test]
fn far_above_threshold_is_partial() {
    let (w, e, l1) = setup(61, WeightSpec::Const(1.0));
    let p = e.with_lambda(50.0 * l1).unwrap();
    let d = solve_dual(&w, &p, &SolveOptions::default(), Some(l1));
    assert!(d.is_partial());
    assert!(matches!(d.minus, BranchOutcome::Failed { .. }));
    assert!(d.warnings.iter().any(|m| m.contains("threshold")));
}

#[test]
fn sweep_rows_in_order_and_repeatable() {
    let (w, e, l1) = setup(41, WeightSpec::Const(1.0));
    let lambdas: Vec<f64> = [0.1, 0.5, 0.9].iter().map(|f| f * l1).collect();
    let opts = SolveOptions::default();
    let rows = lambda_sweep(&w, &e, &lambdas, &opts, Some(l1)).unwrap();
    assert_eq!(rows.len(), 3);
    for (r, l) in rows.iter().zip(&lambdas) {
        assert_eq!(r.lambda, *l);
        assert!(r.conv_plus && r.conv_minus);
        assert!(r.j_plus <= 0.0);
        assert!(r.separation > 1e-3);
    }
    let again = lambda_sweep(&w, &e, &lambdas, &opts, Some(l1)).unwrap();
    assert_eq!(rows, again);
}

#[test]
fn restarts_report_multiplicity() {
    let (w, e, l1) = setup(41, WeightSpec::Sin2Pi);
    let p = e.with_lambda(0.5 * l1).unwrap();
    let opts = SolveOptions {
        restarts: 3,
        seed: 5,
        ..Default::default()
    };
    let d = solve_dual(&w, &p, &opts, Some(l1));
    assert!(d.complete, "{:?}", d.warnings);
    assert!(d.multiplicity.iter().all(|&m| m >= 1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Accepted iterates never raise J, stay strictly on their branch, and
    // symmetric data keeps u = v.
    #[test]
    fn descent_invariants(frac in 0.05f64..0.9, n in 21usize..81, sin in any::<bool>()) {
        let a = if sin { WeightSpec::Sin2Pi } else { WeightSpec::Const(1.0) };
        let (w, e, l1) = setup(n, a);
        let p = e.with_lambda(frac * l1).unwrap();
        for branch in [NehariClass::Plus, NehariClass::Minus] {
            let init = default_initializer(&w, branch);
            let r = minimize_on_branch(&w, &p, branch, &init, &SolveOptions::default()).unwrap();
            prop_assert!(r.energy_trace.windows(2).all(|t| t[1] <= t[0]));
            prop_assert!(r.branch_margin > 0.0);
            prop_assert!(r.max_component_gap <= 1e-8);
            if r.converged {
                prop_assert!(r.constraint_residual <= 1e-10);
                prop_assert!(r.pde_residual_riesz_norm <= 1e-8);
            }
        }
    }
}
