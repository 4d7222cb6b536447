mod common;

use common::*;
use prehyp_core::bundle_ops::FirstOrderOperator;
use prehyp_core::cauchy::*;
use prehyp_core::linalg::c;
use prehyp_core::qft_dirac::*;
use prehyp_core::*;

const LEVELS: [f64; 3] = [0.0, 0.25, 0.5];

type Pair = (FirstOrderOperator, FirstOrderOperator);

fn setup(nx: usize) -> (DiagonalMetric, Grid1p1) {
    let m = minkowski((-0.5, 1.0), (-4.5, 4.5));
    let g = Grid1p1::new(&m, nx, 0.5).unwrap();
    (m, g)
}

fn second_data(g: &Grid1p1) -> CauchyData {
    CauchyData::from_exprs(
        g,
        CauchyLine { t0: 0.0 },
        &[e("0.3*exp(-5*(x+0.5)^2)"), e("exp(-5*(x-0.4)^2)")],
        &[Some(e("exp(-6*x^2)")), None],
        &Window::new(0.0, 3.5, 4.0).unwrap(),
    )
    .unwrap()
}

fn solutions(nx: usize, pair: &dyn Fn(&DiagonalMetric) -> Pair) -> (DiagonalMetric, Grid1p1, GridSection, GridSection) {
    let (m, g) = setup(nx);
    let (p, q) = pair(&m);
    let opts = SolveOptions::default();
    let phi = solve_cauchy(&p, &q, &m, &bump_data(&g, 0.0), &g, &opts).unwrap().0;
    let psi = solve_cauchy(&p, &q, &m, &second_data(&g), &g, &opts).unwrap().0;
    (m, g, phi, psi)
}

#[test]
fn beta_is_positive_and_hermitian() {
    let rep = CliffordRep::default();
    let (m, g, phi, psi) = solutions(256, &|m| dirac(0.0, m));
    let r = hypersurface_independence(&phi, &psi, &LEVELS, &m, &g, &rep).unwrap();
    assert!(r.positivity_margin > 0.0);
    assert!(r.hermitian_defect <= 1e-12);
    let bb = beta_sigma(&phi, &phi, CauchyLine { t0: 0.25 }, &m, &g, &rep).unwrap();
    let scaled = beta_sigma(&phi.scaled(c(2.0, 0.0)), &phi.scaled(c(2.0, 0.0)), CauchyLine { t0: 0.25 }, &m, &g, &rep).unwrap();
    assert!((scaled - bb * 4.0).norm() <= 1e-12 * bb.norm());
}

#[test]
fn beta_of_data_matches_a_direct_quadrature() {
    let rep = CliffordRep::default();
    let (m, g) = setup(128);
    let a = bump_data(&g, 0.0);
    let b = second_data(&g);
    // Φ†γ⁰γ⁰Ψ = Φ†Ψ: the density is the plain Hermitian product
    let mut want = c(0.0, 0.0);
    for i in 0..g.nx {
        let (u, v) = (a.node(i), b.node(i));
        want += (u[0].conj() * v[0] + u[1].conj() * v[1]) * g.x_weight(i);
    }
    let got = beta_of_data(&a, &b, &m, &g, &rep).unwrap();
    assert!((got - want).norm() <= 1e-13 * want.norm().max(1.0));
}

fn drift_ladder(pair: &dyn Fn(&DiagonalMetric) -> Pair) -> Vec<f64> {
    let rep = CliffordRep::default();
    LADDER
        .iter()
        .map(|&n| {
            let (m, g, phi, psi) = solutions(n, pair);
            hypersurface_independence(&phi, &psi, &LEVELS, &m, &g, &rep).unwrap().hypersurface_drift
        })
        .collect()
}

#[test]
fn drift_vanishes_at_second_order_on_shell() {
    assert_order("massless", &drift_ladder(&|m| dirac(0.0, m)), 1.8);
    assert_order("klein-gordon", &drift_ladder(&|m| kg_pair(1.0, m)), 1.8);
}

#[test]
fn real_mass_current_is_not_conserved() {
    let rep = CliffordRep::default();
    let (m, g, phi, psi) = solutions(256, &|m| dirac(1.0, m));
    let r = hypersurface_independence(&phi, &psi, &LEVELS, &m, &g, &rep).unwrap();
    assert!(r.hypersurface_drift > 1e-2, "{:e}", r.hypersurface_drift);
}

#[test]
fn frozen_data_is_off_shell_and_drifts() {
    let rep = CliffordRep::default();
    let (m, g, phi, _) = solutions(512, &|m| dirac(0.0, m));
    let d = second_data(&g);
    let frozen = GridSection::from_fn(&g, 2, |_, x| {
        let i = ((x - g.chart.x_min) / g.dx).round() as usize;
        Ok(d.node(i).to_vec())
    })
    .unwrap();
    let r = hypersurface_independence(&phi, &frozen, &LEVELS, &m, &g, &rep).unwrap();
    assert!(r.hypersurface_drift >= 1e-2, "{:e}", r.hypersurface_drift);
}

#[test]
fn zero_solution_has_zero_beta() {
    let rep = CliffordRep::default();
    let (m, g) = setup(64);
    let z = GridSection::zeros(&g, 2);
    let r = hypersurface_independence(&z, &z, &LEVELS, &m, &g, &rep).unwrap();
    assert_eq!(r.hypersurface_drift, 0.0);
    assert!(r.values.iter().all(|v| *v == [0.0, 0.0]));
}

#[test]
fn gram_matrix_is_preserved_and_positive() {
    let rep = CliffordRep::default();
    let mut mismatch = Vec::new();
    for &n in &LADDER {
        let (m, g) = setup(n);
        let pair = dirac(0.0, &m);
        let far = CauchyData::from_exprs(&g, CauchyLine { t0: 0.0 }, &[e("exp(-8*(x-1.5)^2)"), e("0")], &[None, None], &Window::new(1.5, 1.0, 12.0).unwrap())
            .unwrap();
        let data = [bump_data(&g, 0.0), second_data(&g), far];
        let r = data_space_isometry_check(&data, CauchyLine { t0: 0.5 }, &m, (&pair.0, &pair.1), &g, &rep, &SolveOptions::default()).unwrap();
        assert!(r.min_eigenvalue_sigma > 0.0 && r.min_eigenvalue_sigma_prime > 0.0);
        mismatch.push(r.max_relative_mismatch);
    }
    assert!(mismatch[2] <= 1e-3, "{mismatch:?}");
}
