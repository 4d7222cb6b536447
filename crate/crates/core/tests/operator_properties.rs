mod common;

use common::*;
use num_complex::Complex64;
use prehyp_core::bundle_ops::*;
use prehyp_core::linalg::{c, max_abs_entry, CMatrix};
use prehyp_core::qft_dirac::{build_dirac_pair_on, CliffordRep, DiracModel};
use prehyp_core::geometry::inverse_metric_on_covector;
use prehyp_core::*;
use proptest::prelude::*;

fn cmatrix(scale: f64) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-scale..scale, -scale..scale), 4)
        .prop_map(|v| CMatrix::from_iterator(2, 2, v.into_iter().map(|(a, b)| c(a, b))))
}

fn constant_op(a_t: CMatrix, a_x: CMatrix, b: CMatrix) -> FirstOrderOperator {
    FirstOrderOperator::new(MatrixField::constant(a_t), MatrixField::constant(a_x), MatrixField::constant(b)).unwrap()
}

fn curved() -> DiagonalMetric {
    DiagonalMetric::new(line((-1.0, 1.0), (-3.0, 3.0)), e("1 + 0.2*sin(x)"), e("1.5 + 0.1*t"))
}

proptest! {
    #[test]
    fn composition_symbol_is_the_product(
        pt in cmatrix(2.0), px in cmatrix(2.0), qt in cmatrix(2.0), qx in cmatrix(2.0), b in cmatrix(2.0),
        xi in (-3.0f64..3.0, -3.0f64..3.0),
    ) {
        let p = constant_op(pt.clone(), px.clone(), b.clone());
        let q = constant_op(qt.clone(), qx.clone(), b);
        let got = principal_symbol_2(&compose(&p, &q).unwrap(), (0.0, 0.0), xi).unwrap();
        let want = (pt * c(xi.0, 0.0) + px * c(xi.1, 0.0)) * (qt * c(xi.0, 0.0) + qx * c(xi.1, 0.0));
        prop_assert!(max_abs_entry(&(got - want)) < 1e-10);
    }

    #[test]
    fn normal_hyperbolicity_of_pq_transfers_to_qp(
        m in cmatrix(0.5), n in cmatrix(0.5), b1 in cmatrix(3.0), b2 in cmatrix(3.0),
    ) {
        let rep = CliffordRep::default();
        let m = m + CMatrix::identity(2, 2) * c(2.0, 0.0);
        let n = n + CMatrix::identity(2, 2) * c(2.0, 0.0);
        let (mi, ni) = (m.clone().try_inverse().unwrap(), n.clone().try_inverse().unwrap());
        let p = constant_op(&m * &rep.gamma0 * &n, &m * &rep.gamma1 * &n, b1);
        let q = constant_op(&ni * &rep.gamma0 * &mi, &ni * &rep.gamma1 * &mi, b2);
        let metric = minkowski((-1.0, 1.0), (-1.0, 1.0));
        let pts = [(0.0, 0.0), (0.3, -0.4)];
        let tol = Some(1e-9);
        let pq = is_normally_hyperbolic(&compose(&p, &q).unwrap(), &metric, &pts, tol).unwrap();
        prop_assert!(pq.pass);
        let qp = is_normally_hyperbolic(&compose(&q, &p).unwrap(), &metric, &pts, tol).unwrap();
        prop_assert!(qp.pass, "QP deviation {:e}", qp.max_deviation);
    }

    #[test]
    fn any_zeroth_order_term_keeps_the_dirac_pair_complementary(a in cmatrix(4.0)) {
        let metric = minkowski((-1.0, 1.0), (-1.0, 1.0));
        let model = DiracModel::new(0.0).with_potential(MatrixField::constant(a));
        let (p, q) = build_dirac_pair_on(&model, &metric).unwrap();
        let r = is_complementary_pair(&p, &q, &metric, &[(0.0, 0.0), (0.5, 0.5)], None).unwrap();
        prop_assert!(r.pass);
    }

    #[test]
    fn double_adjoint_is_the_identity(
        b in cmatrix(1.0), k in 0.5f64..2.0, s in -0.5f64..0.5,
        pt in (-0.9f64..0.9, -2.5f64..2.5),
    ) {
        let metric = curved();
        let a_x = MatrixField::from_exprs(
            2,
            vec![e(&format!("sin({k}*x)")), e("1"), e(&format!("{s}*t")), e("2")],
            vec![None, Some(e("cos(x)")), None, None],
        );
        let p = FirstOrderOperator::new(MatrixField::identity(2), a_x, MatrixField::constant(b)).unwrap();
        let pp = formal_adjoint(&formal_adjoint(&p, &metric).unwrap(), &metric).unwrap();
        let (t, x) = pt;
        prop_assert!(max_abs_entry(&(pp.a_t.eval(t, x).unwrap() - p.a_t.eval(t, x).unwrap())) < 1e-14);
        prop_assert!(max_abs_entry(&(pp.a_x.eval(t, x).unwrap() - p.a_x.eval(t, x).unwrap())) < 1e-14);
        prop_assert!(max_abs_entry(&(pp.b.eval(t, x).unwrap() - p.b.eval(t, x).unwrap())) < 1e-8);
    }
}

#[test]
fn dirac_symbol_is_invertible_off_the_light_cone() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let metric = curved();
    let (p, _) = build_dirac_pair_on(&DiracModel::new(1.0), &metric).unwrap();
    let mut checked = 0;
    while checked < 200 {
        let pt = (rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..3.0));
        let xi = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let g = inverse_metric_on_covector(&metric, pt, xi).unwrap();
        if g.abs() < 1e-6 {
            continue;
        }
        let r = symbol_invertibility(&p, pt, xi, 1e-12).unwrap();
        assert!(r.invertible && r.abs_det >= g.abs() - 1e-10, "{pt:?} {xi:?}: {} vs {g}", r.abs_det);
        checked += 1;
    }
}

fn bump(t: f64, x: f64, tc: f64, xc: f64) -> f64 {
    (-20.0 * (t - tc).powi(2) - 8.0 * (x - xc).powi(2)).exp()
}

fn adjoint_defect(nx: usize) -> f64 {
    let metric = curved();
    let g = Grid1p1::new(&metric, nx, 0.5).unwrap();
    let (p, _) = twisted_pair();
    let p = p.plus_zeroth_order(&MatrixField::from_exprs(2, vec![e("t"), e("0"), e("x^2"), e("1")], vec![None; 4])).unwrap();
    let phi = GridSection::from_fn(&g, 2, |t, x| Ok(vec![c(bump(t, x, 0.1, 0.2), 0.0), c(0.0, bump(t, x, -0.1, 0.0))])).unwrap();
    let psi = GridSection::from_fn(&g, 2, |t, x| Ok(vec![c(bump(t, x, 0.0, -0.3), 0.0), c(0.5 * bump(t, x, 0.2, 0.3), 0.0)])).unwrap();
    let lhs = pairing(&psi, &apply(&p, &phi, &g).unwrap(), &metric, &g).unwrap();
    let rhs = pairing(&apply(&formal_adjoint(&p, &metric).unwrap(), &psi, &g).unwrap(), &phi, &metric, &g).unwrap();
    (lhs - rhs).norm() / lhs.norm()
}

#[test]
fn discrete_adjoint_defect_is_second_order() {
    let d: Vec<f64> = [64, 128, 256].iter().map(|&n| adjoint_defect(n)).collect();
    assert_order("adjoint defect", &d, 1.8);
}

fn interior_gap(a: &GridSection, b: &GridSection, g: &Grid1p1) -> f64 {
    let mut m: f64 = 0.0;
    for j in 2..g.nt - 2 {
        for i in 2..g.nx - 2 {
            for (u, v) in a.node(j, i).iter().zip(b.node(j, i)) {
                m = m.max((u - v).norm());
            }
        }
    }
    m
}

#[test]
fn composed_operator_agrees_with_successive_application() {
    let d: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let metric = curved();
            let g = Grid1p1::new(&metric, n, 0.5).unwrap();
            let (p, q) = twisted_pair();
            let phi = GridSection::from_fn(&g, 2, |t, x| Ok(vec![c(bump(t, x, 0.0, 0.0), 0.0), c(0.0, bump(t, x, 0.2, -0.4))])).unwrap();
            let once = apply(&compose(&p, &q).unwrap(), &phi, &g).unwrap();
            let twice = apply(&p, &apply(&q, &phi, &g).unwrap(), &g).unwrap();
            interior_gap(&once, &twice, &g)
        })
        .collect();
    assert_order("composition", &d, 1.8);
}

#[test]
fn dirac_operator_on_a_plane_wave() {
    let (k, w, mass) = (2.0f64, 1.3f64, 0.6f64);
    let v = [c(1.0, 0.0), c(0.3, -0.2)];
    let d: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let chart = Chart1p1::new((0.0, 1.0), (0.0, std::f64::consts::TAU), Topology::Circle).unwrap();
            let metric = DiagonalMetric::minkowski(chart);
            let g = Grid1p1::new(&metric, n, 0.5).unwrap();
            let (p, _) = dirac(mass, &metric);
            let wave = |t: f64, x: f64| Complex64::from_polar(1.0, k * x - w * t);
            let phi = GridSection::from_fn(&g, 2, |t, x| Ok(vec![v[0] * wave(t, x), v[1] * wave(t, x)])).unwrap();
            // γ⁰(−iω)v + γ¹(ik)v + m v, with γ⁰ the swap and γ¹ = [[0,−1],[1,0]]
            let sym = [
                -c(0.0, w) * v[1] - c(0.0, k) * v[1] + v[0] * mass,
                -c(0.0, w) * v[0] + c(0.0, k) * v[0] + v[1] * mass,
            ];
            let exact = GridSection::from_fn(&g, 2, |t, x| Ok(vec![sym[0] * wave(t, x), sym[1] * wave(t, x)])).unwrap();
            apply(&p, &phi, &g).unwrap().max_abs_diff(&exact).unwrap()
        })
        .collect();
    assert_order("plane wave", &d, 1.8);
}
