//! Matrix-valued coefficient fields over (t, x).
//!
//! Fields are built from constants or expression matrices and combined with
//! sums, products, transposes and coordinate derivatives. Each field tracks
//! which coordinates it depends on, so derivatives along an axis the field
//! does not depend on are exactly zero and constant-coefficient algebra stays
//! exact.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::expr::{Expr, ExprError};
use crate::linalg::{is_zero, CMatrix, ZERO};

/// Step of the centered difference used for coefficient derivatives.
pub const DIFF_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    T,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dependence {
    pub t: bool,
    pub x: bool,
}

impl Dependence {
    pub const NONE: Dependence = Dependence { t: false, x: false };

    pub fn union(self, other: Dependence) -> Dependence {
        Dependence {
            t: self.t || other.t,
            x: self.x || other.x,
        }
    }

    pub fn on(self, axis: Axis) -> bool {
        match axis {
            Axis::T => self.t,
            Axis::X => self.x,
        }
    }
}

type EvalFn = dyn Fn(f64, f64) -> Result<CMatrix, ExprError> + Send + Sync;

#[derive(Clone)]
enum Kind {
    Constant(CMatrix),
    Exprs {
        re: Vec<Expr>,
        im: Vec<Option<Expr>>,
    },
    Derived(Arc<EvalFn>),
}

#[derive(Clone)]
pub struct MatrixField {
    rank: usize,
    dep: Dependence,
    kind: Kind,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Constant(m) => format!("Constant({m:?})"),
            Kind::Exprs { re, .. } => {
                let src: Vec<&str> = re.iter().map(|e| e.source()).collect();
                format!("Exprs({src:?})")
            }
            Kind::Derived(_) => "Derived".to_string(),
        };
        f.debug_struct("MatrixField")
            .field("rank", &self.rank)
            .field("dep", &self.dep)
            .field("kind", &kind)
            .finish()
    }
}

impl MatrixField {
    pub fn constant(m: CMatrix) -> MatrixField {
        assert!(m.is_square(), "coefficient matrices are square");
        MatrixField {
            rank: m.nrows(),
            dep: Dependence::NONE,
            kind: Kind::Constant(m),
        }
    }

    pub fn zero(rank: usize) -> MatrixField {
        MatrixField::constant(CMatrix::zeros(rank, rank))
    }

    pub fn identity(rank: usize) -> MatrixField {
        MatrixField::constant(CMatrix::identity(rank, rank))
    }

    /// Row-major expression entries; `im` holds optional imaginary parts.
    pub fn from_exprs(rank: usize, re: Vec<Expr>, im: Vec<Option<Expr>>) -> MatrixField {
        assert_eq!(re.len(), rank * rank);
        assert_eq!(im.len(), rank * rank);
        let mut dep = Dependence::NONE;
        for e in re.iter().chain(im.iter().flatten()) {
            dep = dep.union(Dependence {
                t: e.depends_on_t(),
                x: e.depends_on_x(),
            });
        }
        let field = MatrixField {
            rank,
            dep,
            kind: Kind::Exprs { re, im },
        };
        if dep == Dependence::NONE {
            // constant expressions evaluate anywhere
            if let Ok(m) = field.eval(0.0, 0.0) {
                return MatrixField::constant(m);
            }
        }
        field
    }

    /// `s(t, x) * Id`.
    pub fn scalar_expr(rank: usize, s: Expr) -> MatrixField {
        let mut re = Vec::with_capacity(rank * rank);
        for i in 0..rank {
            for j in 0..rank {
                re.push(if i == j { s.clone() } else { Expr::constant(0.0) });
            }
        }
        MatrixField::from_exprs(rank, re, vec![None; rank * rank])
    }

    pub fn derived<F>(rank: usize, dep: Dependence, f: F) -> MatrixField
    where
        F: Fn(f64, f64) -> Result<CMatrix, ExprError> + Send + Sync + 'static,
    {
        MatrixField {
            rank,
            dep,
            kind: Kind::Derived(Arc::new(f)),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dependence(&self) -> Dependence {
        self.dep
    }

    pub fn as_constant(&self) -> Option<&CMatrix> {
        match &self.kind {
            Kind::Constant(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant().is_some_and(is_zero)
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<CMatrix, ExprError> {
        match &self.kind {
            Kind::Constant(m) => Ok(m.clone()),
            Kind::Exprs { re, im } => {
                let k = self.rank;
                let mut m = CMatrix::zeros(k, k);
                for i in 0..k {
                    for j in 0..k {
                        let idx = i * k + j;
                        let r = re[idx].eval(t, x)?;
                        let v = match &im[idx] {
                            Some(e) => e.eval(t, x)?,
                            None => 0.0,
                        };
                        m[(i, j)] = Complex64::new(r, v);
                    }
                }
                Ok(m)
            }
            Kind::Derived(f) => f(t, x),
        }
    }

    fn binary<F>(&self, other: &MatrixField, op: F) -> MatrixField
    where
        F: Fn(&CMatrix, &CMatrix) -> CMatrix + Send + Sync + Copy + 'static,
    {
        assert_eq!(self.rank, other.rank, "rank mismatch in field algebra");
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            return MatrixField::constant(op(a, b));
        }
        let (a, b) = (self.clone(), other.clone());
        MatrixField::derived(self.rank, self.dep.union(other.dep), move |t, x| {
            Ok(op(&a.eval(t, x)?, &b.eval(t, x)?))
        })
    }

    pub fn add(&self, other: &MatrixField) -> MatrixField {
        if other.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return other.clone();
        }
        self.binary(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &MatrixField) -> MatrixField {
        if other.is_zero() {
            return self.clone();
        }
        self.binary(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &MatrixField) -> MatrixField {
        if self.is_zero() || other.is_zero() {
            return MatrixField::zero(self.rank);
        }
        self.binary(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Complex64) -> MatrixField {
        if let Some(m) = self.as_constant() {
            return MatrixField::constant(m * s);
        }
        let a = self.clone();
        MatrixField::derived(self.rank, self.dep, move |t, x| Ok(a.eval(t, x)? * s))
    }

    pub fn transpose(&self) -> MatrixField {
        if let Some(m) = self.as_constant() {
            return MatrixField::constant(m.transpose());
        }
        let a = self.clone();
        MatrixField::derived(self.rank, self.dep, move |t, x| Ok(a.eval(t, x)?.transpose()))
    }

    /// Coordinate derivative by a fourth-order centered difference with step
    /// [`DIFF_STEP`]; exactly zero along axes the field does not depend on.
    pub fn derivative(&self, axis: Axis) -> MatrixField {
        if !self.dep.on(axis) {
            return MatrixField::zero(self.rank);
        }
        let a = self.clone();
        MatrixField::derived(self.rank, self.dep, move |t, x| {
            let h = DIFF_STEP;
            let at = |s: f64| match axis {
                Axis::T => a.eval(t + s, x),
                Axis::X => a.eval(t, x + s),
            };
            let d = (at(-2.0 * h)? - at(2.0 * h)? + (at(h)? - at(-h)?) * Complex64::from(8.0))
                / Complex64::from(12.0 * h);
            Ok(d)
        })
    }

    /// Samples the field at each `x` for fixed `t`, row-major per node.
    pub fn sample_row(&self, t: f64, xs: &[f64], out: &mut [Complex64]) -> Result<(), ExprError> {
        let kk = self.rank * self.rank;
        debug_assert_eq!(out.len(), xs.len() * kk);
        if let Some(m) = self.as_constant() {
            let mut flat = vec![ZERO; kk];
            crate::linalg::flatten_into(m, &mut flat);
            for chunk in out.chunks_mut(kk) {
                chunk.copy_from_slice(&flat);
            }
            return Ok(());
        }
        for (i, &x) in xs.iter().enumerate() {
            let m = self.eval(t, x)?;
            crate::linalg::flatten_into(&m, &mut out[i * kk..(i + 1) * kk]);
        }
        Ok(())
    }
}

/// Samples a field along the grid's x nodes, caching time-independent rows.
pub struct RowSampler<'a> {
    field: &'a MatrixField,
    xs: &'a [f64],
    fixed: Option<Vec<Complex64>>,
}

impl<'a> RowSampler<'a> {
    pub fn new(field: &'a MatrixField, xs: &'a [f64]) -> Result<RowSampler<'a>, ExprError> {
        let fixed = if field.dependence().t {
            None
        } else {
            let mut row = vec![ZERO; xs.len() * field.rank() * field.rank()];
            field.sample_row(0.0, xs, &mut row)?;
            Some(row)
        };
        Ok(RowSampler { field, xs, fixed })
    }

    pub fn at(&self, t: f64) -> Result<std::borrow::Cow<'_, [Complex64]>, ExprError> {
        match &self.fixed {
            Some(row) => Ok(std::borrow::Cow::Borrowed(row)),
            None => {
                let mut row = vec![ZERO; self.xs.len() * self.field.rank() * self.field.rank()];
                self.field.sample_row(t, self.xs, &mut row)?;
                Ok(std::borrow::Cow::Owned(row))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, real_matrix};

    #[test]
    fn derivative_of_expression_field() {
        let f = MatrixField::scalar_expr(1, Expr::parse("sin(x)*exp(t)").unwrap());
        let dx = f.derivative(Axis::X);
        let dt = f.derivative(Axis::T);
        let (t, x) = (0.3f64, 0.7f64);
        let exact_dx = x.cos() * t.exp();
        let exact_dt = x.sin() * t.exp();
        assert!((dx.eval(t, x).unwrap()[(0, 0)].re - exact_dx).abs() < 1e-11);
        assert!((dt.eval(t, x).unwrap()[(0, 0)].re - exact_dt).abs() < 1e-11);
    }

    #[test]
    fn derivative_along_independent_axis_is_exact_zero() {
        let f = MatrixField::scalar_expr(2, Expr::parse("1+x^2").unwrap());
        assert!(f.derivative(Axis::T).is_zero());
        assert!(MatrixField::identity(2).derivative(Axis::X).is_zero());
    }

    #[test]
    fn constant_algebra_folds() {
        let a = MatrixField::constant(real_matrix(2, &[0.0, 1.0, 1.0, 0.0]));
        let b = MatrixField::constant(real_matrix(2, &[0.0, -1.0, 1.0, 0.0]));
        let p = a.mul(&b).add(&b.mul(&a));
        assert!(p.is_zero());
        let s = a.scale(c(0.0, 2.0));
        assert_eq!(s.eval(0.0, 0.0).unwrap()[(0, 1)], c(0.0, 2.0));
    }

    #[test]
    fn constant_expressions_fold_to_constants() {
        let f = MatrixField::scalar_expr(1, Expr::parse("2*pi").unwrap());
        assert!(f.is_constant());
    }
}
