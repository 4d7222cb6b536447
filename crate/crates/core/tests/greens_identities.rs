mod common;

use common::*;
use prehyp_core::greens::*;
use prehyp_core::linalg::c;
use prehyp_core::*;

fn grid(nx: usize) -> (DiagonalMetric, Grid1p1) {
    let m = greens_metric();
    let g = Grid1p1::new(&m, nx, 0.5).unwrap();
    (m, g)
}

#[test]
fn identities_converge_in_both_directions() {
    for dir in [GreenDirection::Retarded, GreenDirection::Advanced] {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for &n in &LADDER {
            let (m, g) = grid(n);
            let (p, q) = dirac(1.0, &m);
            let opts = SolveOptions::default();
            first.push(identity_i_residual(&p, &q, &m, &source_early(&g), dir, &g, &opts).unwrap());
            second.push(identity_ii_residual(&p, &q, &m, &source_late(&g), dir, &g, &opts).unwrap());
        }
        assert_order(&format!("{dir:?} (i)"), &first, 1.8);
        assert_order(&format!("{dir:?} (ii)"), &second, 1.8);
    }
}

#[test]
fn greens_operators_respect_causal_support() {
    let (m, g) = grid(512);
    let (p, q) = dirac(0.0, &m);
    let phi = source_early(&g);
    for dir in [GreenDirection::Retarded, GreenDirection::Advanced] {
        let s = greens_apply(&p, &q, &m, &phi, dir, &g, &SolveOptions::default()).unwrap();
        assert!(s.sup_norm() > 1e-3);
        assert!(support_leak(&s, &m, &phi, dir, &g).unwrap() <= 1e-7);
    }
}

#[test]
fn retarded_solution_vanishes_before_the_source() {
    let (m, g) = grid(256);
    let (p, q) = dirac(1.0, &m);
    let phi = source_late(&g);
    let s = greens_apply(&p, &q, &m, &phi, GreenDirection::Retarded, &g, &SolveOptions::default()).unwrap();
    let (first, _) = phi.levels.unwrap();
    for j in 0..first {
        assert!(s.level(j).iter().all(|z| z.norm() <= 1e-14), "level {j}");
    }
}

#[test]
fn pairing_is_exact_for_constant_coefficients() {
    let (m, g) = grid(256);
    let (p, q) = dirac(1.0, &m);
    let r = adjoint_pairing_check(&p, &q, &m, &source_late(&g), &source_early(&g), GreenDirection::Retarded, &g, &SolveOptions::default())
        .unwrap();
    assert!(r.defect < 1e-10, "{r:?}");
    assert!(r.mismatched_defect >= 0.1);
}

#[test]
fn pairing_defect_converges_for_variable_principal_part() {
    let mut defects = Vec::new();
    for &n in &LADDER {
        let (m, g) = grid(n);
        let (p, q) = twisted_pair();
        let r = adjoint_pairing_check(&p, &q, &m, &source_late(&g), &source_early(&g), GreenDirection::Retarded, &g, &SolveOptions::default())
            .unwrap();
        assert!(r.mismatched_defect >= 0.1);
        defects.push(r.defect);
    }
    assert!(defects[2] <= 1e-3, "{defects:?}");
    assert_order("pairing", &defects, 1.8);
}

#[test]
fn another_partner_gives_the_same_greens_operator() {
    let gaps: Vec<f64> = [256, 512]
        .iter()
        .map(|&n| {
            let (m, g) = grid(n);
            let (p, q) = dirac(1.0, &m);
            let q_alt = q.plus_zeroth_order(&MatrixField::identity(2).scale(c(0.5, 0.0))).unwrap();
            uniqueness_probe(&p, &q, &q_alt, &m, &source_early(&g), GreenDirection::Retarded, &g, &SolveOptions::default()).unwrap()
        })
        .collect();
    assert!(gaps[0] / gaps[1] > 3.0, "{gaps:?}");

    let (m, g) = grid(128);
    let (p, q) = dirac(1.0, &m);
    let same = uniqueness_probe(&p, &q, &q.clone(), &m, &source_early(&g), GreenDirection::Advanced, &g, &SolveOptions::default()).unwrap();
    assert_eq!(same, 0.0);
}

#[test]
fn sources_too_close_to_the_start_are_rejected() {
    let (m, g) = grid(256);
    let (p, q) = dirac(0.0, &m);
    let early = TestSection::from_fn(&g, 2, |t, x| Ok(vec![c(gauss(t, x, -1.95, 0.0), 0.0), c(0.0, 0.0)])).unwrap();
    let r = greens_apply(&p, &q, &m, &early, GreenDirection::Retarded, &g, &SolveOptions::default());
    assert!(matches!(r, Err(Error::CausalMargin(_))), "{r:?}");
}

#[test]
fn zero_source_gives_zero() {
    let (m, g) = grid(64);
    let (p, q) = dirac(1.0, &m);
    let zero = TestSection::new(GridSection::zeros(&g, 2), &g).unwrap();
    assert!(zero.is_zero());
    let s = greens_apply(&p, &q, &m, &zero, GreenDirection::Advanced, &g, &SolveOptions::default()).unwrap();
    assert_eq!(s.sup_norm(), 0.0);
}
