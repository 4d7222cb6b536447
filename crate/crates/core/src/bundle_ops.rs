//! First- and second-order matrix-coefficient differential operators on
//! the trivial rank-k bundle over a 1+1 chart.
//!
//! A first-order operator acts as `PΦ = Aᵗ∇_tΦ + Aˣ∇_xΦ + BΦ` with
//! `∇_μ = ∂_μ + ω_μ`; a second-order one as
//! `LΦ = Cᵗᵗ∂_t²Φ + 2Cᵗˣ∂_t∂_xΦ + Cˣˣ∂_x²Φ + Dᵗ∂_tΦ + Dˣ∂_xΦ + EΦ`.
//! Principal symbols are `σ_P(ξ) = Aᵗξ_t + Aˣξ_x` and
//! `σ_L(ξ) = Cᵗᵗξ_t² + 2Cᵗˣξ_tξ_x + Cˣˣξ_x²`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{Axis, Dependence, MatrixField, RowSampler, DIFF_STEP};
use crate::geometry::{inverse_metric_on_covector, DiagonalMetric};
use crate::grid::{Grid1p1, GridSection};
use crate::linalg::{condition_estimate, matvec_acc, max_abs_entry, CMatrix, ZERO};
use crate::stencil;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct FirstOrderOperator {
    pub rank: usize,
    pub a_t: MatrixField,
    pub a_x: MatrixField,
    pub b: MatrixField,
    pub omega_t: Option<MatrixField>,
    pub omega_x: Option<MatrixField>,
}

fn check_rank(expected: usize, field: &MatrixField) -> Result<()> {
    if field.rank() != expected {
        return Err(Error::RankMismatch(expected, field.rank()));
    }
    Ok(())
}

impl FirstOrderOperator {
    pub fn new(a_t: MatrixField, a_x: MatrixField, b: MatrixField) -> Result<FirstOrderOperator> {
        let rank = a_t.rank();
        check_rank(rank, &a_x)?;
        check_rank(rank, &b)?;
        Ok(FirstOrderOperator {
            rank,
            a_t,
            a_x,
            b,
            omega_t: None,
            omega_x: None,
        })
    }

    pub fn with_connection(mut self, omega_t: MatrixField, omega_x: MatrixField) -> Result<FirstOrderOperator> {
        check_rank(self.rank, &omega_t)?;
        check_rank(self.rank, &omega_x)?;
        self.omega_t = Some(omega_t);
        self.omega_x = Some(omega_x);
        Ok(self)
    }

    pub fn has_connection(&self) -> bool {
        let nonzero = |w: &Option<MatrixField>| w.as_ref().is_some_and(|f| !f.is_zero());
        nonzero(&self.omega_t) || nonzero(&self.omega_x)
    }

    /// Zeroth-order coefficient in partial-derivative form, `B + Aᵗω_t + Aˣω_x`.
    pub fn effective_b(&self) -> MatrixField {
        let mut b = self.b.clone();
        if let Some(w) = &self.omega_t {
            b = b.add(&self.a_t.mul(w));
        }
        if let Some(w) = &self.omega_x {
            b = b.add(&self.a_x.mul(w));
        }
        b
    }

    pub fn is_constant(&self) -> bool {
        self.a_t.is_constant() && self.a_x.is_constant() && self.effective_b().is_constant()
    }

    /// Adds a zeroth-order term.
    pub fn plus_zeroth_order(&self, extra: &MatrixField) -> Result<FirstOrderOperator> {
        check_rank(self.rank, extra)?;
        Ok(FirstOrderOperator {
            b: self.b.add(extra),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone)]
pub struct SecondOrderOperator {
    pub rank: usize,
    pub c_tt: MatrixField,
    /// Symmetrized mixed coefficient; the operator carries `2Cᵗˣ∂_t∂_x`.
    pub c_tx: MatrixField,
    pub c_xx: MatrixField,
    pub d_t: MatrixField,
    pub d_x: MatrixField,
    pub e: MatrixField,
}

impl SecondOrderOperator {
    pub fn new(
        c_tt: MatrixField,
        c_tx: MatrixField,
        c_xx: MatrixField,
        d_t: MatrixField,
        d_x: MatrixField,
        e: MatrixField,
    ) -> Result<SecondOrderOperator> {
        let rank = c_tt.rank();
        for f in [&c_tx, &c_xx, &d_t, &d_x, &e] {
            check_rank(rank, f)?;
        }
        Ok(SecondOrderOperator {
            rank,
            c_tt,
            c_tx,
            c_xx,
            d_t,
            d_x,
            e,
        })
    }

    /// `∂_t² − ∂_x² + m²` on rank `k`.
    pub fn klein_gordon(rank: usize, mass: f64) -> SecondOrderOperator {
        let id = MatrixField::identity(rank);
        SecondOrderOperator {
            rank,
            c_tt: id.clone(),
            c_tx: MatrixField::zero(rank),
            c_xx: id.scale(Complex64::from(-1.0)),
            d_t: MatrixField::zero(rank),
            d_x: MatrixField::zero(rank),
            e: id.scale(Complex64::from(mass * mass)),
        }
    }

    fn principal_fields(&self) -> [&MatrixField; 3] {
        [&self.c_tt, &self.c_tx, &self.c_xx]
    }

    pub fn is_constant(&self) -> bool {
        [&self.c_tt, &self.c_tx, &self.c_xx, &self.d_t, &self.d_x, &self.e]
            .iter()
            .all(|f| f.is_constant())
    }
}

pub fn principal_symbol_1(op: &FirstOrderOperator, point: (f64, f64), xi: (f64, f64)) -> Result<CMatrix> {
    let (t, x) = point;
    Ok(op.a_t.eval(t, x)? * Complex64::from(xi.0) + op.a_x.eval(t, x)? * Complex64::from(xi.1))
}

pub fn principal_symbol_2(op: &SecondOrderOperator, point: (f64, f64), xi: (f64, f64)) -> Result<CMatrix> {
    let (t, x) = point;
    let (a, b) = xi;
    Ok(op.c_tt.eval(t, x)? * Complex64::from(a * a)
        + op.c_tx.eval(t, x)? * Complex64::from(2.0 * a * b)
        + op.c_xx.eval(t, x)? * Complex64::from(b * b))
}

/// Expands `P(QΦ)` by the product rule.
pub fn compose(p: &FirstOrderOperator, q: &FirstOrderOperator) -> Result<SecondOrderOperator> {
    if p.rank != q.rank {
        return Err(Error::RankMismatch(p.rank, q.rank));
    }
    let half = Complex64::from(0.5);
    let pb = p.effective_b();
    let qb = q.effective_b();
    // Pᵘ∂_μ applied to a coefficient field of Q
    let transport = |f: &MatrixField| {
        p.a_t
            .mul(&f.derivative(Axis::T))
            .add(&p.a_x.mul(&f.derivative(Axis::X)))
    };
    let c_tt = p.a_t.mul(&q.a_t);
    let c_xx = p.a_x.mul(&q.a_x);
    let c_tx = p.a_t.mul(&q.a_x).add(&p.a_x.mul(&q.a_t)).scale(half);
    let d_t = transport(&q.a_t).add(&p.a_t.mul(&qb)).add(&pb.mul(&q.a_t));
    let d_x = transport(&q.a_x).add(&p.a_x.mul(&qb)).add(&pb.mul(&q.a_x));
    let e = transport(&qb).add(&pb.mul(&qb));
    SecondOrderOperator::new(c_tt, c_tx, c_xx, d_t, d_x, e)
}

/// Covectors on which a quadratic form in two variables is checked; the
/// form is determined by its values there.
pub const POLARIZATION_SET: [(f64, f64); 3] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolReport {
    pub pass: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub worst_point: (f64, f64),
    pub worst_covector: (f64, f64),
}

/// Default tolerance: `1e-12·(1 + max|coefficient|)` for constant principal
/// parts on a constant metric, `1e-8` otherwise.
pub fn default_tolerance(op: &SecondOrderOperator, metric: &DiagonalMetric) -> f64 {
    let constants: Option<Vec<&CMatrix>> = op.principal_fields().iter().map(|f| f.as_constant()).collect();
    match constants {
        Some(ms) if metric.is_constant() => {
            let scale = ms.iter().map(|m| max_abs_entry(m)).fold(0.0, f64::max);
            1e-12 * (1.0 + scale)
        }
        _ => 1e-8,
    }
}

/// Checks `σ_L(ξ) = g(ξ,ξ)·Id` on the polarization covectors at each point.
pub fn is_normally_hyperbolic(
    op: &SecondOrderOperator,
    metric: &DiagonalMetric,
    sample_points: &[(f64, f64)],
    tol: Option<f64>,
) -> Result<SymbolReport> {
    if sample_points.is_empty() {
        return Err(Error::InvalidData("no sample points".into()));
    }
    let tolerance = tol.unwrap_or_else(|| default_tolerance(op, metric));
    let id = CMatrix::identity(op.rank, op.rank);
    let mut report = SymbolReport {
        pass: true,
        max_deviation: 0.0,
        tolerance,
        worst_point: sample_points[0],
        worst_covector: POLARIZATION_SET[0],
    };
    for &p in sample_points {
        for &xi in &POLARIZATION_SET {
            let g = inverse_metric_on_covector(metric, p, xi)?;
            let dev = principal_symbol_2(op, p, xi)? - &id * Complex64::from(g);
            let d = max_abs_entry(&dev);
            if d > report.max_deviation {
                report.max_deviation = d;
                report.worst_point = p;
                report.worst_covector = xi;
            }
        }
    }
    report.pass = report.max_deviation < tolerance;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairReport {
    pub pass: bool,
    pub pq: SymbolReport,
    pub qp: SymbolReport,
}

/// Checks that both `PQ` and `QP` are normally hyperbolic.
pub fn is_complementary_pair(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    sample_points: &[(f64, f64)],
    tol: Option<f64>,
) -> Result<PairReport> {
    let pq = is_normally_hyperbolic(&compose(p, q)?, metric, sample_points, tol)?;
    let qp = is_normally_hyperbolic(&compose(q, p)?, metric, sample_points, tol)?;
    Ok(PairReport {
        pass: pq.pass && qp.pass,
        pq,
        qp,
    })
}

/// Every 8th level and every 8th node, plus the last of each.
pub fn default_sample_points(grid: &Grid1p1) -> Vec<(f64, f64)> {
    let pick = |n: usize| {
        let mut v: Vec<usize> = (0..n).step_by(8).collect();
        if *v.last().unwrap() != n - 1 {
            v.push(n - 1);
        }
        v
    };
    let mut out = Vec::new();
    for j in pick(grid.nt) {
        for i in pick(grid.nx) {
            out.push((grid.ts()[j], grid.xs()[i]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertibilityReport {
    pub invertible: bool,
    pub abs_det: f64,
    pub condition_estimate: f64,
}

pub fn symbol_invertibility(
    op: &FirstOrderOperator,
    point: (f64, f64),
    xi: (f64, f64),
    tol: f64,
) -> Result<InvertibilityReport> {
    let sigma = principal_symbol_1(op, point, xi)?;
    let abs_det = sigma.clone().lu().determinant().norm();
    let invertible = abs_det > tol;
    Ok(InvertibilityReport {
        invertible,
        abs_det,
        condition_estimate: if invertible {
            condition_estimate(&sigma)
        } else {
            f64::INFINITY
        },
    })
}

/// Formal adjoint with respect to `∫ ψ(Pφ) αβ dt dx` on the dual bundle:
/// `A*ᵘ = −Aᵘᵀ`, `B* = Bᵀ − ρ⁻¹∂_μ(ρAᵘᵀ)` with `ρ = αβ`.
pub fn formal_adjoint(p: &FirstOrderOperator, metric: &DiagonalMetric) -> Result<FirstOrderOperator> {
    if p.has_connection() {
        return Err(Error::Unsupported(
            "formal adjoint of an operator with a connection".into(),
        ));
    }
    let minus = Complex64::from(-1.0);
    let at = p.a_t.transpose();
    let ax = p.a_x.transpose();
    let mut b = p.b.transpose().sub(&at.derivative(Axis::T)).sub(&ax.derivative(Axis::X));
    for (axis, coeff) in [(Axis::T, &at), (Axis::X, &ax)] {
        if let Some(log_rho) = log_density_derivative(metric, axis, p.rank) {
            b = b.sub(&log_rho.mul(coeff));
        }
    }
    Ok(FirstOrderOperator {
        rank: p.rank,
        a_t: at.scale(minus),
        a_x: ax.scale(minus),
        b,
        omega_t: None,
        omega_x: None,
    })
}

/// `∂_μ ln(αβ)·Id`, or `None` when the density is constant along `axis`.
fn log_density_derivative(metric: &DiagonalMetric, axis: Axis, rank: usize) -> Option<MatrixField> {
    let dep = Dependence {
        t: metric.alpha.depends_on_t() || metric.beta.depends_on_t(),
        x: metric.alpha.depends_on_x() || metric.beta.depends_on_x(),
    };
    if !dep.on(axis) {
        return None;
    }
    let metric = metric.clone();
    Some(MatrixField::derived(rank, dep, move |t, x| {
        let h = DIFF_STEP;
        let ln_rho = |s: f64| -> std::result::Result<f64, crate::ExprError> {
            let (tt, xx) = match axis {
                Axis::T => (t + s, x),
                Axis::X => (t, x + s),
            };
            Ok((metric.alpha.eval(tt, xx)? * metric.beta.eval(tt, xx)?).ln())
        };
        let d = (ln_rho(-2.0 * h)? - ln_rho(2.0 * h)? + 8.0 * (ln_rho(h)? - ln_rho(-h)?)) / (12.0 * h);
        Ok(CMatrix::identity(rank, rank) * Complex64::from(d))
    }))
}

/// Bilinear dual pairing `∫ Σ_i ψ_i f_i αβ dt dx` by the trapezoidal rule.
pub fn pairing(psi: &GridSection, f: &GridSection, metric: &DiagonalMetric, grid: &Grid1p1) -> Result<Complex64> {
    psi.check_compatible(f)?;
    psi.check_on(grid)?;
    let k = psi.rank;
    let partial: Vec<Result<Complex64>> = (0..grid.nt)
        .into_par_iter()
        .map(|j| {
            let t = grid.ts()[j];
            let mut s = ZERO;
            for (i, &x) in grid.xs().iter().enumerate() {
                let a = psi.node(j, i);
                let b = f.node(j, i);
                let mut dot = ZERO;
                for c in 0..k {
                    dot += a[c] * b[c];
                }
                if dot != ZERO {
                    s += dot * (metric.volume_density(t, x)? * grid.x_weight(i));
                }
            }
            Ok(s * grid.t_weight(j))
        })
        .collect();
    let mut total = ZERO;
    for p in partial {
        total += p?;
    }
    Ok(total)
}

/// Discrete action of an operator on a grid section.
pub trait DifferentialOperator {
    fn rank(&self) -> usize;
    fn apply(&self, phi: &GridSection, grid: &Grid1p1) -> Result<GridSection>;
}

pub fn apply<O: DifferentialOperator + ?Sized>(op: &O, phi: &GridSection, grid: &Grid1p1) -> Result<GridSection> {
    op.apply(phi, grid)
}

fn check_apply(rank: usize, phi: &GridSection, grid: &Grid1p1, min_levels: usize) -> Result<()> {
    phi.check_on(grid)?;
    if phi.rank != rank {
        return Err(Error::RankMismatch(rank, phi.rank));
    }
    if grid.nt < min_levels {
        return Err(Error::GridTooSmall(format!("{} time levels", grid.nt)));
    }
    if !grid.is_periodic() && grid.nx < 4 {
        return Err(Error::GridTooSmall(format!("{} nodes", grid.nx)));
    }
    Ok(())
}

fn weighted_levels(phi: &GridSection, weights: &[(usize, f64)], out: &mut [Complex64]) {
    out.fill(ZERO);
    for &(l, w) in weights {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(phi.level(l)) {
            *o += v * w;
        }
    }
}

impl DifferentialOperator for FirstOrderOperator {
    fn rank(&self) -> usize {
        self.rank
    }

    fn apply(&self, phi: &GridSection, grid: &Grid1p1) -> Result<GridSection> {
        check_apply(self.rank, phi, grid, 3)?;
        let k = self.rank;
        let kk = k * k;
        let nx = grid.nx;
        let b = self.effective_b();
        let xs = grid.xs();
        let s_at = RowSampler::new(&self.a_t, xs)?;
        let s_ax = RowSampler::new(&self.a_x, xs)?;
        let s_b = RowSampler::new(&b, xs)?;
        let mut out = GridSection::zeros(grid, k);
        out.data
            .par_chunks_mut(nx * k)
            .enumerate()
            .try_for_each(|(j, row)| -> Result<()> {
                let t = grid.ts()[j];
                let (at, ax, bb) = (s_at.at(t)?, s_ax.at(t)?, s_b.at(t)?);
                let mut dt = vec![ZERO; nx * k];
                let mut dx = vec![ZERO; nx * k];
                weighted_levels(phi, &stencil::time_d1(j, grid.nt, grid.dt), &mut dt);
                stencil::d1(phi.level(j), nx, k, grid.dx, grid.is_periodic(), &mut dx);
                let cur = phi.level(j);
                for i in 0..nx {
                    let o = &mut row[i * k..(i + 1) * k];
                    let m = i * kk..(i + 1) * kk;
                    let v = i * k..(i + 1) * k;
                    matvec_acc(k, &at[m.clone()], &dt[v.clone()], o);
                    matvec_acc(k, &ax[m.clone()], &dx[v.clone()], o);
                    matvec_acc(k, &bb[m], &cur[v], o);
                }
                Ok(())
            })?;
        Ok(out)
    }
}

impl DifferentialOperator for SecondOrderOperator {
    fn rank(&self) -> usize {
        self.rank
    }

    fn apply(&self, phi: &GridSection, grid: &Grid1p1) -> Result<GridSection> {
        check_apply(self.rank, phi, grid, 4)?;
        let k = self.rank;
        let kk = k * k;
        let nx = grid.nx;
        let periodic = grid.is_periodic();
        let xs = grid.xs();
        let fields = [&self.c_tt, &self.c_tx, &self.c_xx, &self.d_t, &self.d_x, &self.e];
        let samplers: Vec<RowSampler> = fields
            .iter()
            .map(|f| RowSampler::new(f, xs))
            .collect::<std::result::Result<_, _>>()?;
        let mut out = GridSection::zeros(grid, k);
        out.data
            .par_chunks_mut(nx * k)
            .enumerate()
            .try_for_each(|(j, row)| -> Result<()> {
                let t = grid.ts()[j];
                let coeffs: Vec<_> = samplers
                    .iter()
                    .map(|s| s.at(t))
                    .collect::<std::result::Result<_, _>>()?;
                let n = nx * k;
                let mut d_t = vec![ZERO; n];
                let mut d_tt = vec![ZERO; n];
                let mut d_x = vec![ZERO; n];
                let mut d_xx = vec![ZERO; n];
                let mut d_tx = vec![ZERO; n];
                let mut scratch = vec![ZERO; n];
                let wt = stencil::time_d1(j, grid.nt, grid.dt);
                weighted_levels(phi, &wt, &mut d_t);
                weighted_levels(phi, &stencil::time_d2(j, grid.nt, grid.dt), &mut d_tt);
                stencil::d1(phi.level(j), nx, k, grid.dx, periodic, &mut d_x);
                stencil::d2(phi.level(j), nx, k, grid.dx, periodic, &mut d_xx);
                for &(l, w) in &wt {
                    if w == 0.0 {
                        continue;
                    }
                    stencil::d1(phi.level(l), nx, k, grid.dx, periodic, &mut scratch);
                    for (o, v) in d_tx.iter_mut().zip(&scratch) {
                        *o += v * w;
                    }
                }
                let two_dtx: Vec<Complex64> = d_tx.iter().map(|z| z * 2.0).collect();
                let derivs = [&d_tt, &two_dtx, &d_xx, &d_t, &d_x, phi.level(j)];
                for i in 0..nx {
                    let o = &mut row[i * k..(i + 1) * k];
                    for (c, d) in coeffs.iter().zip(derivs.iter()) {
                        matvec_acc(k, &c[i * kk..(i + 1) * kk], &d[i * k..(i + 1) * k], o);
                    }
                }
                Ok(())
            })?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::{Chart1p1, Topology};
    use crate::linalg::{c, real_matrix};

    fn gamma0() -> CMatrix {
        real_matrix(2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn gamma1() -> CMatrix {
        real_matrix(2, &[0.0, -1.0, 1.0, 0.0])
    }

    fn dirac(mass: f64) -> FirstOrderOperator {
        FirstOrderOperator::new(
            MatrixField::constant(gamma0()),
            MatrixField::constant(gamma1()),
            MatrixField::identity(2).scale(c(mass, 0.0)),
        )
        .unwrap()
    }

    fn scalar(a_t: f64, a_x: f64, b: f64) -> FirstOrderOperator {
        let k = |v: f64| MatrixField::constant(real_matrix(1, &[v]));
        FirstOrderOperator::new(k(a_t), k(a_x), k(b)).unwrap()
    }

    fn minkowski() -> DiagonalMetric {
        DiagonalMetric::minkowski(Chart1p1::new((-1.0, 1.0), (-2.0, 2.0), Topology::Line).unwrap())
    }

    fn pts() -> Vec<(f64, f64)> {
        vec![(0.0, 0.0), (0.5, -1.0), (-0.3, 1.7)]
    }

    #[test]
    fn first_order_symbol_examples() {
        let d = dirac(1.0);
        assert_eq!(principal_symbol_1(&d, (0.0, 0.0), (1.0, 0.0)).unwrap(), gamma0());
        assert_eq!(principal_symbol_1(&d, (0.0, 0.0), (0.0, 0.0)).unwrap(), CMatrix::zeros(2, 2));
        assert_eq!(principal_symbol_1(&d, (0.0, 0.0), (1.0, 1.0)).unwrap(), gamma0() + gamma1());
    }

    #[test]
    fn second_order_symbol_examples() {
        let wave = SecondOrderOperator::klein_gordon(1, 0.0);
        assert_eq!(principal_symbol_2(&wave, (0.0, 0.0), (1.0, 1.0)).unwrap()[(0, 0)], ZERO);
        assert_eq!(principal_symbol_2(&wave, (0.0, 0.0), (1.0, 0.0)).unwrap()[(0, 0)], c(1.0, 0.0));
        let l = compose(&dirac(1.0), &dirac(-1.0)).unwrap();
        for (a, b) in [(0.3, -1.2), (2.0, 0.5), (1.0, 1.0)] {
            let s = principal_symbol_2(&l, (0.0, 0.0), (a, b)).unwrap();
            let expected = CMatrix::identity(2, 2) * c(a * a - b * b, 0.0);
            assert!(max_abs_entry(&(s - expected)) < 1e-15);
        }
    }

    #[test]
    fn compose_constant_examples() {
        let dt = scalar(1.0, 0.0, 0.0);
        let l = compose(&dt, &dt).unwrap();
        assert_eq!(l.c_tt.as_constant().unwrap()[(0, 0)], c(1.0, 0.0));
        for f in [&l.c_tx, &l.c_xx, &l.d_t, &l.d_x, &l.e] {
            assert!(f.is_zero());
        }

        let m = 1.5;
        let l = compose(&dirac(m), &dirac(-m)).unwrap();
        assert!(l.d_t.is_zero() && l.d_x.is_zero() && l.c_tx.is_zero());
        assert_eq!(l.c_tt.as_constant().unwrap(), &CMatrix::identity(2, 2));
        assert_eq!(l.c_xx.as_constant().unwrap(), &(CMatrix::identity(2, 2) * c(-1.0, 0.0)));
        assert_eq!(l.e.as_constant().unwrap(), &(CMatrix::identity(2, 2) * c(-m * m, 0.0)));
    }

    #[test]
    fn compose_product_rule_on_variable_zeroth_order() {
        let (at, ax) = (0.7, -1.3);
        let p = scalar(at, ax, 0.0);
        let d = Expr::parse("sin(x)*exp(0.5*t)").unwrap();
        let q = FirstOrderOperator::new(
            MatrixField::zero(1),
            MatrixField::zero(1),
            MatrixField::scalar_expr(1, d.clone()),
        )
        .unwrap();
        let l = compose(&p, &q).unwrap();
        let (t, x) = (0.2f64, 0.9f64);
        let dv = d.eval(t, x).unwrap();
        let d_t = 0.5 * dv;
        let d_x = x.cos() * (0.5 * t).exp();
        assert!((l.d_t.eval(t, x).unwrap()[(0, 0)].re - at * dv).abs() < 1e-14);
        assert!((l.d_x.eval(t, x).unwrap()[(0, 0)].re - ax * dv).abs() < 1e-14);
        let e = l.e.eval(t, x).unwrap()[(0, 0)].re;
        assert!((e - (at * d_t + ax * d_x)).abs() < 1e-10);
    }

    #[test]
    fn normal_hyperbolicity_examples() {
        let m = minkowski();
        let r = is_normally_hyperbolic(&compose(&dirac(1.0), &dirac(-1.0)).unwrap(), &m, &pts(), None).unwrap();
        assert!(r.pass);
        assert!(r.max_deviation < 1e-15);

        let elliptic = SecondOrderOperator::new(
            MatrixField::identity(1),
            MatrixField::zero(1),
            MatrixField::identity(1),
            MatrixField::zero(1),
            MatrixField::zero(1),
            MatrixField::zero(1),
        )
        .unwrap();
        let r = is_normally_hyperbolic(&elliptic, &m, &pts(), None).unwrap();
        assert!(!r.pass);
        assert_eq!(r.max_deviation, 2.0);
        assert_eq!(r.worst_covector, (0.0, 1.0));

        let omega = "1+0.3*sin(x)*cos(t)";
        let conformal = DiagonalMetric::new(m.chart.clone(), Expr::parse(omega).unwrap(), Expr::parse(omega).unwrap());
        let inv_sq = Expr::parse(&format!("1/({omega})^2")).unwrap();
        let neg_inv_sq = Expr::parse(&format!("-1/({omega})^2")).unwrap();
        let l = SecondOrderOperator::new(
            MatrixField::scalar_expr(1, inv_sq),
            MatrixField::zero(1),
            MatrixField::scalar_expr(1, neg_inv_sq),
            MatrixField::zero(1),
            MatrixField::zero(1),
            MatrixField::zero(1),
        )
        .unwrap();
        let r = is_normally_hyperbolic(&l, &conformal, &pts(), None).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.tolerance, 1e-8);
    }

    #[test]
    fn complementary_pair_examples() {
        let m = minkowski();
        assert!(is_complementary_pair(&dirac(1.0), &dirac(-1.0), &m, &pts(), None).unwrap().pass);
        let plus = scalar(1.0, 1.0, 0.0);
        let minus = scalar(1.0, -1.0, 0.0);
        let r = is_complementary_pair(&plus, &minus, &m, &pts(), None).unwrap();
        assert!(r.pass);
        // the predicate only sees principal symbols: (D+m)(D+m) passes too
        assert!(is_complementary_pair(&dirac(1.0), &dirac(1.0), &m, &pts(), None).unwrap().pass);
        // a pair whose symbols multiply to the wrong form fails
        assert!(!is_complementary_pair(&plus, &plus, &m, &pts(), None).unwrap().pass);
    }

    #[test]
    fn symbol_invertibility_examples() {
        let d = dirac(1.0);
        let r = symbol_invertibility(&d, (0.0, 0.0), (1.0, 0.0), 1e-12).unwrap();
        assert!(r.invertible);
        assert!((r.abs_det - 1.0).abs() < 1e-15);
        let r = symbol_invertibility(&d, (0.0, 0.0), (1.0, 1.0), 1e-12).unwrap();
        assert!(!r.invertible);
        assert_eq!(r.abs_det, 0.0);
        assert!(!symbol_invertibility(&d, (0.0, 0.0), (0.0, 0.0), 1e-12).unwrap().invertible);
    }

    #[test]
    fn adjoint_examples() {
        let m = minkowski();
        let a_t = real_matrix(2, &[1.0, 2.0, 3.0, 4.0]);
        let a_x = real_matrix(2, &[0.0, -1.0, 5.0, 2.0]);
        let b = real_matrix(2, &[0.5, 0.25, -1.0, 3.0]);
        let p = FirstOrderOperator::new(
            MatrixField::constant(a_t.clone()),
            MatrixField::constant(a_x.clone()),
            MatrixField::constant(b.clone()),
        )
        .unwrap();
        let adj = formal_adjoint(&p, &m).unwrap();
        assert_eq!(adj.a_t.as_constant().unwrap(), &(-a_t.transpose()));
        assert_eq!(adj.a_x.as_constant().unwrap(), &(-a_x.transpose()));
        assert_eq!(adj.b.as_constant().unwrap(), &b.transpose());
        let back = formal_adjoint(&adj, &m).unwrap();
        assert_eq!(back.a_t.as_constant().unwrap(), &a_t);
        assert_eq!(back.a_x.as_constant().unwrap(), &a_x);
        assert_eq!(back.b.as_constant().unwrap(), &b);

        let adj = formal_adjoint(&scalar(0.0, 1.0, 0.0), &m).unwrap();
        assert_eq!(adj.a_x.as_constant().unwrap()[(0, 0)], c(-1.0, 0.0));
        assert!(adj.b.is_zero());

        let growing = DiagonalMetric::new(m.chart.clone(), Expr::parse("exp(t)").unwrap(), Expr::constant(1.0));
        let adj = formal_adjoint(&scalar(1.0, 0.0, 0.0), &growing).unwrap();
        assert_eq!(adj.a_t.as_constant().unwrap()[(0, 0)], c(-1.0, 0.0));
        assert!((adj.b.eval(0.3, 0.1).unwrap()[(0, 0)].re + 1.0).abs() < 1e-11);

        let with_conn = scalar(1.0, 0.0, 0.0)
            .with_connection(MatrixField::identity(1), MatrixField::zero(1))
            .unwrap();
        assert!(matches!(formal_adjoint(&with_conn, &m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rank_mismatch_is_reported() {
        assert!(matches!(compose(&dirac(0.0), &scalar(1.0, 0.0, 0.0)), Err(Error::RankMismatch(2, 1))));
    }

    fn grid(nx: usize) -> (DiagonalMetric, Grid1p1) {
        let m = minkowski();
        let g = Grid1p1::new(&m, nx, 0.5).unwrap();
        (m, g)
    }

    #[test]
    fn apply_time_derivative_is_exact_on_linear_data() {
        let (_, g) = grid(33);
        let phi = GridSection::from_fn(&g, 1, |t, _| Ok(vec![c(t, 0.0)])).unwrap();
        let out = scalar(1.0, 0.0, 0.0).apply(&phi, &g).unwrap();
        for z in &out.data {
            assert!((z - c(1.0, 0.0)).norm() < 1e-12);
        }
        let zero = GridSection::zeros(&g, 2);
        assert_eq!(dirac(1.0).apply(&zero, &g).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn apply_rejects_tiny_grids_and_rank_mismatch() {
        let (_, g) = grid(33);
        let phi = GridSection::zeros(&g, 1);
        assert!(matches!(dirac(0.0).apply(&phi, &g), Err(Error::RankMismatch(2, 1))));
    }

    #[test]
    fn pairing_examples() {
        let (m, g) = grid(65);
        let bump = GridSection::from_fn(&g, 1, |t, x| Ok(vec![c((-4.0 * (x * x + t * t)).exp(), 0.0)])).unwrap();
        let v = pairing(&bump, &bump, &m, &g).unwrap();
        assert!(v.re > 0.0 && v.im == 0.0);
        let zero = GridSection::zeros(&g, 1);
        assert_eq!(pairing(&zero, &bump, &m, &g).unwrap(), ZERO);
    }
}
