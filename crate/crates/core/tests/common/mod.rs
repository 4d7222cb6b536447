#![allow(dead_code)]

use num_complex::Complex64;
use prehyp_core::bundle_ops::FirstOrderOperator;
use prehyp_core::cauchy::{CauchyData, Window};
use prehyp_core::greens::TestSection;
use prehyp_core::linalg::c;
use prehyp_core::qft_dirac::{build_dirac_pair_on, DiracModel};
use prehyp_core::*;

pub const LADDER: [usize; 3] = [256, 512, 1024];

pub fn e(s: &str) -> Expr {
    Expr::parse(s).unwrap()
}

pub fn line(t: (f64, f64), x: (f64, f64)) -> Chart1p1 {
    Chart1p1::new(t, x, Topology::Line).unwrap()
}

pub fn minkowski(t: (f64, f64), x: (f64, f64)) -> DiagonalMetric {
    DiagonalMetric::minkowski(line(t, x))
}

pub fn dirac(mass: f64, metric: &DiagonalMetric) -> (FirstOrderOperator, FirstOrderOperator) {
    build_dirac_pair_on(&DiracModel::new(mass), metric).unwrap()
}

/// `(D + i m, D − i m)`, whose compositions are the Klein–Gordon operator.
pub fn kg_pair(mass: f64, metric: &DiagonalMetric) -> (FirstOrderOperator, FirstOrderOperator) {
    let a = MatrixField::identity(2).scale(c(0.0, mass));
    build_dirac_pair_on(&DiracModel::new(0.0).with_potential(a), metric).unwrap()
}

fn mat(v: [&str; 4]) -> MatrixField {
    MatrixField::from_exprs(2, v.iter().map(|s| e(s)).collect(), vec![None; 4])
}

/// `(M·D, D·M⁻¹)` with `M = [[1, s], [0, 1]]`, `s = 0.4 sin x`; the
/// x-dependent principal part makes the discrete adjoint inexact.
pub fn twisted_pair() -> (FirstOrderOperator, FirstOrderOperator) {
    let p = FirstOrderOperator::new(
        mat(["0.4*sin(x)", "1", "1", "0"]),
        mat(["0.4*sin(x)", "-1", "1", "0"]),
        MatrixField::zero(2),
    )
    .unwrap();
    let q = FirstOrderOperator::new(
        mat(["0", "1", "1", "-0.4*sin(x)"]),
        mat(["0", "-1", "1", "-0.4*sin(x)"]),
        mat(["0", "0", "0", "-0.4*cos(x)"]),
    )
    .unwrap();
    (p, q)
}

/// Two Gaussian spinor components, windowed to `|x| < 3.5`.
pub fn bump_data(grid: &Grid1p1, t0: f64) -> CauchyData {
    CauchyData::from_exprs(
        grid,
        CauchyLine { t0 },
        &[e("exp(-4*x^2)"), e("0.5*exp(-4*(x-0.3)^2)")],
        &[None, None],
        &Window::new(0.0, 3.5, 4.0).unwrap(),
    )
    .unwrap()
}

pub fn gauss(t: f64, x: f64, tc: f64, xc: f64) -> f64 {
    (-25.0 * (t - tc).powi(2) - 8.0 * (x - xc).powi(2)).exp()
}

pub fn source_early(grid: &Grid1p1) -> TestSection {
    TestSection::from_fn(grid, 2, |t, x| {
        let b = gauss(t, x, -0.6, 0.0);
        Ok(vec![Complex64::from(b), Complex64::new(0.0, 0.5 * b)])
    })
    .unwrap()
}

pub fn source_late(grid: &Grid1p1) -> TestSection {
    TestSection::from_fn(grid, 2, |t, x| {
        let b = gauss(t, x, 0.5, 0.3);
        Ok(vec![Complex64::from(0.7 * b), Complex64::from(-b)])
    })
    .unwrap()
}

pub fn greens_metric() -> DiagonalMetric {
    minkowski((-2.0, 2.0), (-7.0, 7.0))
}

pub fn assert_order(label: &str, errors: &[f64], min: f64) {
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= min, "{label}: order {order:.3} from {errors:?}");
    }
}
