//! Method-of-lines time integration shared by the Cauchy and driven solvers.
//!
//! Classical RK4 in time, second-order centered differences in space.
//! First-order systems evolve `∂_tΦ = M_x∂_xΦ + M_bΦ + (Aᵗ)⁻¹f`; second-order
//! ones evolve `(u, v = ∂_t u)` with `∂_t v = (Cᵗᵗ)⁻¹(f − …)`. On a line the
//! two end nodes are held at zero.

use std::borrow::Cow;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bundle_ops::{FirstOrderOperator, SecondOrderOperator};
use crate::field::MatrixField;
use crate::grid::{Grid1p1, GridSection};
use crate::linalg::{matvec_acc, ZERO};
use crate::stencil;
use crate::{Error, Result};

/// Kreiss–Oliger coefficient used when dissipation is switched on.
pub const DEFAULT_DISSIPATION: f64 = 0.02;

const PAR_MIN_NODES: usize = 128;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveOptions {
    /// Coefficient `ε` of the `−ε c_max/(16 dx) δ⁴` term; zero disables it.
    pub dissipation: f64,
}

impl SolveOptions {
    pub fn dissipative() -> SolveOptions {
        SolveOptions {
            dissipation: DEFAULT_DISSIPATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum March {
    Forward,
    Backward,
    Both,
}

/// Right-hand side of `dy/dt = F(t, y)` on one time level.
pub(crate) trait System: Sync {
    fn state_len(&self) -> usize;
    fn rhs(&self, t: f64, y: &[Complex64], out: &mut [Complex64]) -> Result<()>;
}

fn invert_node(m: &[Complex64], k: usize, t: f64, x: f64, what: &'static str) -> Result<Vec<Complex64>> {
    let a = crate::linalg::CMatrix::from_row_slice(k, k, m);
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lu = a.lu();
    let det = lu.determinant().norm();
    if !(scale > 0.0) || det <= 1e-12 * scale.powi(k as i32) {
        return Err(Error::Singular { what, t, x });
    }
    let inv = lu.try_inverse().ok_or(Error::Singular { what, t, x })?;
    let mut out = vec![ZERO; k * k];
    crate::linalg::flatten_into(&inv, &mut out);
    Ok(out)
}

/// `out[i] = s · a[i] · b[i]` per node.
fn mul_rows(a: &[Complex64], b: &[Complex64], k: usize, s: Complex64) -> Vec<Complex64> {
    let kk = k * k;
    let mut out = vec![ZERO; a.len()];
    for ((o, ma), mb) in out.chunks_mut(kk).zip(a.chunks(kk)).zip(b.chunks(kk)) {
        for r in 0..k {
            for c in 0..k {
                let mut acc = ZERO;
                for l in 0..k {
                    acc += ma[r * k + l] * mb[l * k + c];
                }
                o[r * k + c] = acc * s;
            }
        }
    }
    out
}

fn sample(field: &MatrixField, t: f64, xs: &[f64]) -> Result<Vec<Complex64>> {
    let mut row = vec![ZERO; xs.len() * field.rank() * field.rank()];
    field.sample_row(t, xs, &mut row)?;
    Ok(row)
}

/// Premultiplied coefficient rows, rebuilt per stage time unless all inputs
/// are time-independent.
struct Rows<'a> {
    build: Box<dyn Fn(f64) -> Result<Vec<Vec<Complex64>>> + Sync + 'a>,
    fixed: Option<Vec<Vec<Complex64>>>,
}

impl<'a> Rows<'a> {
    fn new<F>(time_dependent: bool, build: F) -> Result<Rows<'a>>
    where
        F: Fn(f64) -> Result<Vec<Vec<Complex64>>> + Sync + 'a,
    {
        let fixed = if time_dependent { None } else { Some(build(0.0)?) };
        Ok(Rows {
            build: Box::new(build),
            fixed,
        })
    }

    fn at(&self, t: f64) -> Result<Cow<'_, [Vec<Complex64>]>> {
        match &self.fixed {
            Some(r) => Ok(Cow::Borrowed(r)),
            None => Ok(Cow::Owned((self.build)(t)?)),
        }
    }
}

fn inverse_rows(row: &[Complex64], k: usize, xs: &[f64], t: f64, what: &'static str) -> Result<Vec<Complex64>> {
    let kk = k * k;
    let parts: Vec<Result<Vec<Complex64>>> = row
        .par_chunks(kk)
        .with_min_len(PAR_MIN_NODES)
        .zip(xs.par_iter())
        .map(|(m, &x)| invert_node(m, k, t, x, what))
        .collect();
    let mut out = Vec::with_capacity(row.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Source values at an arbitrary time by 4-point Lagrange interpolation
/// between stored levels; exact on levels.
pub(crate) struct SourceSampler<'a> {
    section: &'a GridSection,
    t_min: f64,
    dt: f64,
}

impl<'a> SourceSampler<'a> {
    pub(crate) fn new(section: &'a GridSection, grid: &Grid1p1) -> SourceSampler<'a> {
        SourceSampler {
            section,
            t_min: grid.chart.t_min,
            dt: grid.dt,
        }
    }

    fn add_into(&self, t: f64, scale: &[Complex64], k: usize, out: &mut [Complex64]) {
        let nt = self.section.nt;
        let p = (t - self.t_min) / self.dt;
        let near = p.round();
        let mut terms: [(usize, f64); 4] = [(0, 0.0); 4];
        if (p - near).abs() < 1e-9 {
            terms[0] = ((near.max(0.0) as usize).min(nt - 1), 1.0);
        } else {
            let base = (p.floor() as isize - 1).clamp(0, nt as isize - 4) as usize;
            let s = p - base as f64;
            for (m, term) in terms.iter_mut().enumerate() {
                let mut w = 1.0;
                for l in 0..4 {
                    if l != m {
                        w *= (s - l as f64) / (m as f64 - l as f64);
                    }
                }
                *term = (base + m, w);
            }
        }
        let kk = k * k;
        let nx = self.section.nx;
        let mut f = vec![ZERO; nx * k];
        for &(l, w) in &terms {
            if w == 0.0 {
                continue;
            }
            for (a, b) in f.iter_mut().zip(self.section.level(l)) {
                *a += b * w;
            }
        }
        for i in 0..nx {
            matvec_acc(k, &scale[i * kk..(i + 1) * kk], &f[i * k..(i + 1) * k], &mut out[i * k..(i + 1) * k]);
        }
    }
}

fn dissipate(y: &[Complex64], nx: usize, k: usize, periodic: bool, coeff: f64, out: &mut [Complex64]) {
    let mut d4 = vec![ZERO; y.len()];
    stencil::delta4(y, nx, k, periodic, &mut d4);
    for (o, d) in out.iter_mut().zip(&d4) {
        *o -= d * coeff;
    }
}

fn pin_line_ends(out: &mut [Complex64], nx: usize, k: usize, periodic: bool) {
    if !periodic {
        out[..k].fill(ZERO);
        out[(nx - 1) * k..nx * k].fill(ZERO);
    }
}

/// `∂_tΦ = −(Aᵗ)⁻¹(Aˣ∂_xΦ + B_effΦ − f)`.
pub(crate) struct FirstOrderSystem<'a> {
    grid: &'a Grid1p1,
    k: usize,
    rows: Rows<'a>,
    source: Option<SourceSampler<'a>>,
    ko: f64,
}

impl<'a> FirstOrderSystem<'a> {
    pub(crate) fn new(
        op: &'a FirstOrderOperator,
        grid: &'a Grid1p1,
        source: Option<&'a GridSection>,
        opts: &SolveOptions,
    ) -> Result<FirstOrderSystem<'a>> {
        let k = op.rank;
        let b = op.effective_b();
        let dep_t = op.a_t.dependence().t || op.a_x.dependence().t || b.dependence().t;
        let xs = grid.xs();
        let minus = Complex64::from(-1.0);
        let a_t = op.a_t.clone();
        let a_x = op.a_x.clone();
        let rows = Rows::new(dep_t, move |t| {
            let inv = inverse_rows(&sample(&a_t, t, xs)?, k, xs, t, "A_t")?;
            let m_x = mul_rows(&inv, &sample(&a_x, t, xs)?, k, minus);
            let m_b = mul_rows(&inv, &sample(&b, t, xs)?, k, minus);
            Ok(vec![m_x, m_b, inv])
        })?;
        Ok(FirstOrderSystem {
            grid,
            k,
            rows,
            source: source.map(|s| SourceSampler::new(s, grid)),
            ko: opts.dissipation * grid.c_max / (16.0 * grid.dx),
        })
    }
}

impl System for FirstOrderSystem<'_> {
    fn state_len(&self) -> usize {
        self.grid.nx * self.k
    }

    fn rhs(&self, t: f64, y: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let (nx, k) = (self.grid.nx, self.k);
        let kk = k * k;
        let periodic = self.grid.is_periodic();
        let rows = self.rows.at(t)?;
        let mut dx = vec![ZERO; y.len()];
        stencil::d1(y, nx, k, self.grid.dx, periodic, &mut dx);
        let (m_x, m_b) = (&rows[0], &rows[1]);
        out.par_chunks_mut(k)
            .with_min_len(PAR_MIN_NODES)
            .enumerate()
            .for_each(|(i, o)| {
                o.fill(ZERO);
                let m = i * kk..(i + 1) * kk;
                matvec_acc(k, &m_x[m.clone()], &dx[i * k..(i + 1) * k], o);
                matvec_acc(k, &m_b[m], &y[i * k..(i + 1) * k], o);
            });
        if let Some(src) = &self.source {
            src.add_into(t, &rows[2], k, out);
        }
        if self.ko > 0.0 {
            dissipate(y, nx, k, periodic, self.ko, out);
        }
        pin_line_ends(out, nx, k, periodic);
        Ok(())
    }
}

/// State `[u | v]`, `∂_t u = v`,
/// `∂_t v = (Cᵗᵗ)⁻¹(f − 2Cᵗˣ∂_xv − Cˣˣ∂_x²u − Dᵗv − Dˣ∂_xu − Eu)`.
pub(crate) struct SecondOrderSystem<'a> {
    grid: &'a Grid1p1,
    k: usize,
    rows: Rows<'a>,
    mixed: bool,
    source: Option<SourceSampler<'a>>,
    ko: f64,
}

impl<'a> SecondOrderSystem<'a> {
    pub(crate) fn new(
        op: &'a SecondOrderOperator,
        grid: &'a Grid1p1,
        source: Option<&'a GridSection>,
        opts: &SolveOptions,
    ) -> Result<SecondOrderSystem<'a>> {
        let k = op.rank;
        let fields = [&op.c_tx, &op.c_xx, &op.d_t, &op.d_x, &op.e];
        let dep_t = op.c_tt.dependence().t || fields.iter().any(|f| f.dependence().t);
        let xs = grid.xs();
        let c_tt = op.c_tt.clone();
        let rest: Vec<MatrixField> = fields.iter().map(|f| (*f).clone()).collect();
        let rows = Rows::new(dep_t, move |t| {
            let inv = inverse_rows(&sample(&c_tt, t, xs)?, k, xs, t, "C_tt")?;
            let mut out = Vec::with_capacity(6);
            for (n, f) in rest.iter().enumerate() {
                let s = if n == 0 { -2.0 } else { -1.0 };
                out.push(mul_rows(&inv, &sample(f, t, xs)?, k, Complex64::from(s)));
            }
            out.push(inv);
            Ok(out)
        })?;
        Ok(SecondOrderSystem {
            grid,
            k,
            rows,
            mixed: !op.c_tx.is_zero(),
            source: source.map(|s| SourceSampler::new(s, grid)),
            ko: opts.dissipation * grid.c_max / (16.0 * grid.dx),
        })
    }
}

impl System for SecondOrderSystem<'_> {
    fn state_len(&self) -> usize {
        2 * self.grid.nx * self.k
    }

    fn rhs(&self, t: f64, y: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let (nx, k) = (self.grid.nx, self.k);
        let n = nx * k;
        let kk = k * k;
        let periodic = self.grid.is_periodic();
        let h = self.grid.dx;
        let rows = self.rows.at(t)?;
        let (u, v) = y.split_at(n);
        let (du, dv) = out.split_at_mut(n);
        du.copy_from_slice(v);

        let mut ux = vec![ZERO; n];
        let mut uxx = vec![ZERO; n];
        let mut vx = vec![ZERO; n];
        stencil::d1(u, nx, k, h, periodic, &mut ux);
        stencil::d2(u, nx, k, h, periodic, &mut uxx);
        if self.mixed {
            stencil::d1(v, nx, k, h, periodic, &mut vx);
        }
        let derivs: [&[Complex64]; 5] = [&vx, &uxx, v, &ux, u];
        dv.par_chunks_mut(k)
            .with_min_len(PAR_MIN_NODES)
            .enumerate()
            .for_each(|(i, o)| {
                o.fill(ZERO);
                let m = i * kk..(i + 1) * kk;
                for (c, d) in rows.iter().zip(derivs.iter()) {
                    matvec_acc(k, &c[m.clone()], &d[i * k..(i + 1) * k], o);
                }
            });
        if let Some(src) = &self.source {
            src.add_into(t, &rows[5], k, dv);
        }
        if self.ko > 0.0 {
            dissipate(u, nx, k, periodic, self.ko, du);
            dissipate(v, nx, k, periodic, self.ko, dv);
        }
        pin_line_ends(du, nx, k, periodic);
        pin_line_ends(dv, nx, k, periodic);
        Ok(())
    }
}

fn rk4_step<S: System>(sys: &S, t: f64, h: f64, y: &mut [Complex64], k: &mut [Vec<Complex64>; 5]) -> Result<()> {
    let [k1, k2, k3, k4, tmp] = k;
    sys.rhs(t, y, k1)?;
    for ((o, a), b) in tmp.iter_mut().zip(y.iter()).zip(k1.iter()) {
        *o = a + b * (0.5 * h);
    }
    sys.rhs(t + 0.5 * h, tmp, k2)?;
    for ((o, a), b) in tmp.iter_mut().zip(y.iter()).zip(k2.iter()) {
        *o = a + b * (0.5 * h);
    }
    sys.rhs(t + 0.5 * h, tmp, k3)?;
    for ((o, a), b) in tmp.iter_mut().zip(y.iter()).zip(k3.iter()) {
        *o = a + b * h;
    }
    sys.rhs(t + h, tmp, k4)?;
    let w = h / 6.0;
    for i in 0..y.len() {
        y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    }
    Ok(())
}

/// Steps `y0` from level `j0` across the grid, handing every visited level
/// (including `j0`) to `store`.
pub(crate) fn march<S, F>(sys: &S, grid: &Grid1p1, j0: usize, y0: &[Complex64], how: March, mut store: F) -> Result<()>
where
    S: System,
    F: FnMut(usize, &[Complex64]),
{
    grid.check_cfl()?;
    let len = sys.state_len();
    if y0.len() != len {
        return Err(Error::GridMismatch(format!("state has {} entries, expected {len}", y0.len())));
    }
    store(j0, y0);
    let mut scratch: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![ZERO; len]);
    if matches!(how, March::Forward | March::Both) {
        let mut y = y0.to_vec();
        for j in j0..grid.nt - 1 {
            rk4_step(sys, grid.ts()[j], grid.dt, &mut y, &mut scratch)?;
            check_finite(&y, grid.ts()[j + 1])?;
            store(j + 1, &y);
        }
    }
    if matches!(how, March::Backward | March::Both) {
        let mut y = y0.to_vec();
        for j in (1..=j0).rev() {
            rk4_step(sys, grid.ts()[j], -grid.dt, &mut y, &mut scratch)?;
            check_finite(&y, grid.ts()[j - 1])?;
            store(j - 1, &y);
        }
    }
    Ok(())
}

fn check_finite(y: &[Complex64], t: f64) -> Result<()> {
    if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Cfl(format!("solution blew up by t={t}")))
    }
}

/// Marches a first-order state and collects it into a section.
pub(crate) fn solve_first(
    sys: &FirstOrderSystem<'_>,
    grid: &Grid1p1,
    j0: usize,
    y0: &[Complex64],
    how: March,
) -> Result<GridSection> {
    let mut out = GridSection::zeros(grid, sys.k);
    march(sys, grid, j0, y0, how, |j, y| out.level_mut(j).copy_from_slice(y))?;
    Ok(out)
}

/// Marches a second-order state and keeps the `u` half.
pub(crate) fn solve_second(
    sys: &SecondOrderSystem<'_>,
    grid: &Grid1p1,
    j0: usize,
    y0: &[Complex64],
    how: March,
) -> Result<GridSection> {
    let mut out = GridSection::zeros(grid, sys.k);
    let n = grid.nx * sys.k;
    march(sys, grid, j0, y0, how, |j, y| out.level_mut(j).copy_from_slice(&y[..n]))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_exact_for_cubics_in_time() {
        use crate::geometry::{Chart1p1, DiagonalMetric, Topology};
        let m = DiagonalMetric::minkowski(Chart1p1::new((0.0, 1.0), (0.0, 1.0), Topology::Circle).unwrap());
        let g = Grid1p1::with_steps(&m, 8, 16).unwrap();
        let f = |t: f64| t * t * t - 2.0 * t + 0.5;
        let s = GridSection::from_fn(&g, 1, |t, _| Ok(vec![Complex64::from(f(t))])).unwrap();
        let sampler = SourceSampler::new(&s, &g);
        let one = vec![Complex64::from(1.0); 8];
        for t in [0.0, 0.5 * g.dt, 3.5 * g.dt, 1.0 - 0.5 * g.dt, 1.0] {
            let mut out = vec![ZERO; 8];
            sampler.add_into(t, &one, 1, &mut out);
            assert!((out[3].re - f(t)).abs() < 1e-13, "t={t}");
        }
    }
}
