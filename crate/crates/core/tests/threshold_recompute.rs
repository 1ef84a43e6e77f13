use nehari_core::thresholds::{
    compute_thresholds, estimate_sobolev_constant, thresholds_from_constants, ASCENT_TOL,
};
use nehari_core::{Grid, Params, WeightSpec, Weights};

#[test]
fn lambda1_from_independent_ascent() {
    let grid = Grid::new(1, 400).unwrap();
    let one = WeightSpec::Const(1.0);
    let w = Weights::from_specs(grid, &one, &one).unwrap();
    let e = Params::exponents(1.5, 2.0, 2.0).unwrap();
    let th = compute_thresholds(&w, &e, 1).unwrap();

    let s2 = estimate_sobolev_constant(grid, 2.0, ASCENT_TOL, 1234).unwrap();
    assert!((s2 * std::f64::consts::PI - 1.0).abs() < 0.01);
    let s_q = estimate_sobolev_constant(grid, 1.5, ASCENT_TOL, 99).unwrap();
    let s4 = estimate_sobolev_constant(grid, 4.0, ASCENT_TOL, 99).unwrap();
    let again = thresholds_from_constants(1.0, 1.0, &e, s_q, s4, 99).unwrap();
    assert!((again.lambda1 / th.lambda1 - 1.0).abs() < 0.02);
    assert!((th.delta1(th.lambda1) - th.delta / 2.0).abs() < 1e-9 * th.delta);
}
