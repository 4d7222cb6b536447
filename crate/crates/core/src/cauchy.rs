//! The first-order Cauchy problem `PΦ = 0, Φ|_Σ = Φ₀` and its reduction to
//! a normally hyperbolic second-order problem.
//!
//! For a complementary pair `(P, Q)` the solution of `PΦ = 0` is the solution
//! of `QPΦ = 0` with data `Φ₀` and normal derivative `Ψ₀` fixed by `P`
//! itself. A direct first-order evolution is kept alongside as an
//! independent route to the same solution.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle_ops::{
    apply, compose, default_sample_points, is_complementary_pair, is_normally_hyperbolic, FirstOrderOperator,
    SecondOrderOperator,
};
use crate::evolve::{self, FirstOrderSystem, March, SecondOrderSystem, SolveOptions};
use crate::expr::Expr;
use crate::geometry::{normalize, shadow_at_times, CauchyLine, CausalShadow, DiagonalMetric, Direction, Interval, Topology};
use crate::grid::{Grid1p1, GridSection};
use crate::linalg::{matvec_acc, ZERO};
use crate::stencil;
use crate::{Error, Result};

/// Values at or below this magnitude count as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

/// Nodes that must separate a causal shadow from a line boundary.
pub const CAUSAL_MARGIN_NODES: usize = 8;

/// Shadow inflation, in cells, used when measuring support leak.
pub const LEAK_INFLATION_CELLS: f64 = 4.0;

/// Smooth plateau `½[tanh(s(x−c+h)) − tanh(s(x−c−h))]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub center: f64,
    pub halfwidth: f64,
    pub steepness: f64,
}

impl Window {
    pub fn new(center: f64, halfwidth: f64, steepness: f64) -> Result<Window> {
        if !(halfwidth > 0.0 && steepness > 0.0 && steepness.is_finite() && center.is_finite()) {
            return Err(Error::InvalidData(format!(
                "window needs positive halfwidth and finite positive steepness, got h={halfwidth}, s={steepness}"
            )));
        }
        Ok(Window {
            center,
            halfwidth,
            steepness,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = self.steepness;
        let d = x - self.center;
        0.5 * ((s * (d + self.halfwidth)).tanh() - (s * (d - self.halfwidth)).tanh())
    }

    /// Rejects windows whose edges the grid cannot resolve.
    pub fn check_resolved(&self, dx: f64) -> Result<()> {
        if self.steepness * dx > 1.0 {
            return Err(Error::InvalidData(format!(
                "window edge (steepness {}) is not resolved at dx={dx:.3e}",
                self.steepness
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Full,
    Intervals(Vec<Interval>),
}

impl Support {
    pub fn is_empty(&self) -> bool {
        matches!(self, Support::Intervals(v) if v.is_empty())
    }

    pub fn intervals(&self, grid: &Grid1p1) -> Vec<Interval> {
        match self {
            Support::Full => vec![Interval::new(grid.chart.x_min, grid.chart.x_max)],
            Support::Intervals(v) => v.clone(),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Support::Full => true,
            Support::Intervals(v) => v.iter().any(|iv| iv.contains(x)),
        }
    }
}

/// Node hull of the entries above [`SUPPORT_THRESHOLD`], widened by one cell.
fn sampled_support(grid: &Grid1p1, rank: usize, values: &[Complex64]) -> Support {
    let nx = grid.nx;
    let hot: Vec<bool> = values
        .chunks(rank)
        .map(|v| v.iter().any(|z| z.norm() > SUPPORT_THRESHOLD))
        .collect();
    if grid.is_periodic() && hot.iter().all(|&h| h) {
        return Support::Full;
    }
    let (x_min, x_max) = (grid.chart.x_min, grid.chart.x_max);
    let period = x_max - x_min;
    let mut out = Vec::new();
    let mut i = 0;
    while i < nx {
        if !hot[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < nx && hot[i] {
            i += 1;
        }
        let lo = grid.xs()[start] - grid.dx;
        let hi = grid.xs()[i - 1] + grid.dx;
        out.push(Interval::new(lo.max(x_min), hi.min(x_max)));
        if grid.is_periodic() {
            if lo < x_min {
                out.push(Interval::new(lo + period, x_max));
            }
            if hi > x_max {
                out.push(Interval::new(x_min, hi - period));
            }
        }
    }
    Support::Intervals(normalize(out))
}

/// Compactly supported data on a grid level.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    /// Time of the grid level the hypersurface snapped to.
    pub t0: f64,
    pub level: usize,
    pub rank: usize,
    /// Node-major `[node][component]`.
    pub values: Vec<Complex64>,
    pub support: Support,
}

impl CauchyData {
    pub fn zeros(grid: &Grid1p1, sigma: CauchyLine, rank: usize) -> Result<CauchyData> {
        CauchyData::from_values(grid, sigma, rank, vec![ZERO; grid.nx * rank])
    }

    /// Wraps node values; the support is sampled and entries outside it are
    /// set to zero.
    pub fn from_values(grid: &Grid1p1, sigma: CauchyLine, rank: usize, mut values: Vec<Complex64>) -> Result<CauchyData> {
        if values.len() != grid.nx * rank {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes of rank {rank}",
                values.len(),
                grid.nx
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidData("non-finite Cauchy data".into()));
        }
        let level = grid.level_of(sigma.t0)?;
        let support = sampled_support(grid, rank, &values);
        clear_outside(grid, rank, &support, &mut values);
        Ok(CauchyData {
            t0: grid.ts()[level],
            level,
            rank,
            values,
            support,
        })
    }

    /// Samples `(re_i + i·im_i)(t0, x) · w(x)` per component.
    pub fn from_exprs(
        grid: &Grid1p1,
        sigma: CauchyLine,
        re: &[Expr],
        im: &[Option<Expr>],
        window: &Window,
    ) -> Result<CauchyData> {
        if re.len() != im.len() {
            return Err(Error::RankMismatch(re.len(), im.len()));
        }
        window.check_resolved(grid.dx)?;
        let level = grid.level_of(sigma.t0)?;
        let t = grid.ts()[level];
        let k = re.len();
        let mut values = Vec::with_capacity(grid.nx * k);
        for &x in grid.xs() {
            let w = window.eval(x);
            for (r, i) in re.iter().zip(im) {
                let v = match i {
                    Some(e) => Complex64::new(r.eval(t, x)?, e.eval(t, x)?),
                    None => Complex64::from(r.eval(t, x)?),
                };
                values.push(v * w);
            }
        }
        CauchyData::from_values(grid, CauchyLine { t0: t }, k, values)
    }

    pub fn sigma(&self) -> CauchyLine {
        CauchyLine { t0: self.t0 }
    }

    pub fn nx(&self) -> usize {
        self.values.len() / self.rank
    }

    pub fn node(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.rank..(i + 1) * self.rank]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `a·self + b·other` on the same level; the support is resampled.
    pub fn combine(&self, a: Complex64, other: &CauchyData, b: Complex64, grid: &Grid1p1) -> Result<CauchyData> {
        self.check_matches(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        CauchyData::from_values(grid, self.sigma(), self.rank, values)
    }

    fn check_matches(&self, other: &CauchyData) -> Result<()> {
        if self.rank != other.rank {
            return Err(Error::RankMismatch(self.rank, other.rank));
        }
        if self.level != other.level || self.values.len() != other.values.len() {
            return Err(Error::GridMismatch("Cauchy data live on different levels or grids".into()));
        }
        Ok(())
    }

    fn check_on(&self, grid: &Grid1p1) -> Result<()> {
        if self.values.len() != grid.nx * self.rank || self.level >= grid.nt {
            return Err(Error::GridMismatch(format!(
                "data with {} nodes at level {} on a {}x{} grid",
                self.nx(),
                self.level,
                grid.nt,
                grid.nx
            )));
        }
        Ok(())
    }
}

fn clear_outside(grid: &Grid1p1, rank: usize, support: &Support, values: &mut [Complex64]) {
    for (i, &x) in grid.xs().iter().enumerate() {
        if !support.contains(x) {
            values[i * rank..(i + 1) * rank].fill(ZERO);
        }
    }
}

/// Causal shadow of a support over every grid level.
pub fn support_shadow(
    metric: &DiagonalMetric,
    grid: &Grid1p1,
    support: &Support,
    t0: f64,
    direction: Direction,
) -> Result<CausalShadow> {
    shadow_at_times(metric, &support.intervals(grid), t0, direction, grid.ts(), grid.dt)
}

/// Requires the shadow to stay [`CAUSAL_MARGIN_NODES`] nodes clear of line
/// boundaries at every level.
pub fn check_causal_margin(shadow: &CausalShadow, grid: &Grid1p1) -> Result<()> {
    if grid.chart.topology == Topology::Circle {
        return Ok(());
    }
    let margin = CAUSAL_MARGIN_NODES as f64 * grid.dx;
    let (lo, hi) = (grid.chart.x_min + margin, grid.chart.x_max - margin);
    let tol = 1e-9 * grid.dx;
    for (j, ivs) in shadow.levels.iter().enumerate() {
        for iv in ivs {
            if shadow.truncated || iv.lo < lo - tol || iv.hi > hi + tol {
                return Err(Error::CausalMargin(format!(
                    "shadow [{:.4}, {:.4}] at t={:.4} comes within {CAUSAL_MARGIN_NODES} nodes of the boundary",
                    iv.lo, iv.hi, shadow.times[j]
                )));
            }
        }
    }
    Ok(())
}

/// Largest `|Φ|` at nodes farther than `inflate` from the shadow.
pub fn leak_outside(phi: &GridSection, grid: &Grid1p1, shadow: &CausalShadow, inflate: f64) -> f64 {
    let per_level: Vec<f64> = (0..grid.nt)
        .into_par_iter()
        .map(|j| {
            let mut m: f64 = 0.0;
            for (i, &x) in grid.xs().iter().enumerate() {
                if !shadow.contains(j, x, inflate) {
                    for z in phi.node(j, i) {
                        m = m.max(z.norm());
                    }
                }
            }
            m
        })
        .collect();
    per_level.into_iter().fold(0.0, f64::max)
}

/// `Ψ₀ = −(αAᵗ)⁻¹(Aˣ(∂_x + ω_x)Φ₀ + BΦ₀)`, the normal derivative along `Σ`
/// of the solution of `PΦ = 0`.
pub fn normal_derivative_data(
    p: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    grid: &Grid1p1,
) -> Result<CauchyData> {
    phi0.check_on(grid)?;
    if phi0.rank != p.rank {
        return Err(Error::RankMismatch(p.rank, phi0.rank));
    }
    let k = p.rank;
    let t = phi0.t0;
    let zeroth = match &p.omega_x {
        Some(w) => p.b.add(&p.a_x.mul(w)),
        None => p.b.clone(),
    };
    let mut dphi = vec![ZERO; phi0.values.len()];
    stencil::d1(&phi0.values, grid.nx, k, grid.dx, grid.is_periodic(), &mut dphi);
    let mut values = vec![ZERO; phi0.values.len()];
    for (i, &x) in grid.xs().iter().enumerate() {
        let v = i * k..(i + 1) * k;
        if !phi0.support.contains(x) || phi0.values[v.clone()].iter().chain(&dphi[v.clone()]).all(|z| *z == ZERO) {
            continue;
        }
        let (alpha, _) = metric.components(t, x)?;
        let normal = p.a_t.eval(t, x)? * Complex64::from(alpha);
        let inv = normal.try_inverse().ok_or_else(|| {
            Error::NotPrenormal(format!("σ_P(n♭) is singular at (t={t}, x={x})"))
        })?;
        let rhs = p.a_x.eval(t, x)? * crate::linalg::CMatrix::from_column_slice(k, 1, &dphi[v.clone()])
            + zeroth.eval(t, x)? * crate::linalg::CMatrix::from_column_slice(k, 1, &phi0.values[v.clone()]);
        let psi = -(inv * rhs);
        values[v].copy_from_slice(psi.as_slice());
    }
    Ok(CauchyData {
        t0: phi0.t0,
        level: phi0.level,
        rank: k,
        values,
        support: phi0.support.clone(),
    })
}

fn check_pair_data(phi0: &CauchyData, psi0: &CauchyData) -> Result<()> {
    phi0.check_matches(psi0)
}

fn require_normally_hyperbolic(l: &SecondOrderOperator, metric: &DiagonalMetric, grid: &Grid1p1) -> Result<()> {
    let report = is_normally_hyperbolic(l, metric, &default_sample_points(grid), None)?;
    if !report.pass {
        return Err(Error::NotNormallyHyperbolic(report.max_deviation));
    }
    Ok(())
}

fn data_shadow(metric: &DiagonalMetric, grid: &Grid1p1, phi0: &CauchyData) -> Result<Option<CausalShadow>> {
    if phi0.support.is_empty() {
        return Ok(None);
    }
    let shadow = support_shadow(metric, grid, &phi0.support, phi0.t0, Direction::Both)?;
    check_causal_margin(&shadow, grid)?;
    Ok(Some(shadow))
}

fn evolve_second(
    l: &SecondOrderOperator,
    grid: &Grid1p1,
    phi0: &CauchyData,
    v0: &[Complex64],
    opts: &SolveOptions,
) -> Result<GridSection> {
    let sys = SecondOrderSystem::new(l, grid, None, opts)?;
    let mut y0 = phi0.values.clone();
    y0.extend_from_slice(v0);
    evolve::solve_second(&sys, grid, phi0.level, &y0, March::Both)
}

/// Solves `LΦ = 0` with `Φ|_Σ = Φ₀` and `∇_nΦ|_Σ = Ψ₀` over the whole grid;
/// the coordinate velocity is `∂_tΦ|_Σ = αΨ₀`.
pub fn solve_second_order(
    l: &SecondOrderOperator,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    psi0: &CauchyData,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<GridSection> {
    phi0.check_on(grid)?;
    check_pair_data(phi0, psi0)?;
    if phi0.rank != l.rank {
        return Err(Error::RankMismatch(l.rank, phi0.rank));
    }
    require_normally_hyperbolic(l, metric, grid)?;
    data_shadow(metric, grid, phi0)?;
    let v0 = coordinate_velocity(metric, grid, psi0, phi0, None)?;
    evolve_second(l, grid, phi0, &v0, opts)
}

/// `∂_tΦ = αΨ₀ − ω_tΦ₀` at each node of `Σ`.
fn coordinate_velocity(
    metric: &DiagonalMetric,
    grid: &Grid1p1,
    psi0: &CauchyData,
    phi0: &CauchyData,
    omega_t: Option<&crate::field::MatrixField>,
) -> Result<Vec<Complex64>> {
    let k = psi0.rank;
    let t = psi0.t0;
    let mut v = vec![ZERO; psi0.values.len()];
    for (i, &x) in grid.xs().iter().enumerate() {
        let r = i * k..(i + 1) * k;
        if psi0.values[r.clone()].iter().chain(&phi0.values[r.clone()]).all(|z| *z == ZERO) {
            continue;
        }
        let (alpha, _) = metric.components(t, x)?;
        for (o, z) in v[r.clone()].iter_mut().zip(&psi0.values[r.clone()]) {
            *o = z * alpha;
        }
        if let Some(w) = omega_t {
            let mut flat = vec![ZERO; k * k];
            crate::linalg::flatten_into(&w.eval(t, x)?, &mut flat);
            let mut wphi = vec![ZERO; k];
            matvec_acc(k, &flat, &phi0.values[r.clone()], &mut wphi);
            for (o, z) in v[r.clone()].iter_mut().zip(&wphi) {
                *o -= z;
            }
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveReport {
    /// `‖PΦ‖` in the discrete space-time L² norm.
    pub residual_l2: f64,
    pub residual_linf: f64,
    /// `max |PΦ|` on `Σ`.
    pub trace_defect: f64,
    /// `max |Φ|` outside the inflated shadow of `supp Φ₀`.
    pub leak_abs: f64,
    /// `leak_abs / ‖Φ₀‖_∞`, zero for zero data.
    pub leak_rel: f64,
    pub initial_sup: f64,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Residual, trace and support diagnostics of a candidate solution of
/// `PΦ = 0` with data `Φ₀`.
pub fn assess(
    p: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    phi: &GridSection,
    grid: &Grid1p1,
) -> Result<SolveReport> {
    let residual = apply(p, phi, grid)?;
    let trace_defect = residual
        .level(phi0.level)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let initial_sup = phi0.sup_norm();
    let leak_abs = match data_shadow(metric, grid, phi0)? {
        Some(shadow) => leak_outside(phi, grid, &shadow, LEAK_INFLATION_CELLS * grid.dx),
        None => phi.sup_norm(),
    };
    Ok(SolveReport {
        residual_l2: residual.l2_norm(grid),
        residual_linf: residual.sup_norm(),
        trace_defect,
        leak_abs,
        leak_rel: if initial_sup > 0.0 { leak_abs / initial_sup } else { 0.0 },
        initial_sup,
        elapsed: Duration::ZERO,
    })
}

fn require_pair(p: &FirstOrderOperator, q: &FirstOrderOperator, metric: &DiagonalMetric, grid: &Grid1p1) -> Result<()> {
    let report = is_complementary_pair(p, q, metric, &default_sample_points(grid), None)?;
    if !report.pass {
        return Err(Error::NotPrenormal(format!(
            "(P, Q) is not a complementary pair: symbol deviation {:e} (PQ), {:e} (QP)",
            report.pq.max_deviation, report.qp.max_deviation
        )));
    }
    Ok(())
}

/// Solves `PΦ = 0, Φ|_Σ = Φ₀` through the normally hyperbolic problem for
/// `QP`.
pub fn solve_cauchy(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<(GridSection, SolveReport)> {
    let start = Instant::now();
    phi0.check_on(grid)?;
    require_pair(p, q, metric, grid)?;
    let phi = reduced_solve(p, q, metric, phi0, grid, opts)?;
    let mut report = assess(p, metric, phi0, &phi, grid)?;
    report.elapsed = start.elapsed();
    Ok((phi, report))
}

fn reduced_solve(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<GridSection> {
    let psi0 = normal_derivative_data(p, metric, phi0, grid)?;
    let l = compose(q, p)?;
    data_shadow(metric, grid, phi0)?;
    let v0 = coordinate_velocity(metric, grid, &psi0, phi0, p.omega_t.as_ref())?;
    evolve_second(&l, grid, phi0, &v0, opts)
}

/// Evolves `∂_tΦ = −(Aᵗ)⁻¹(Aˣ∂_xΦ + BΦ)` directly in both time directions.
pub fn solve_first_order_direct(
    p: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<GridSection> {
    phi0.check_on(grid)?;
    if phi0.rank != p.rank {
        return Err(Error::RankMismatch(p.rank, phi0.rank));
    }
    data_shadow(metric, grid, phi0)?;
    let sys = FirstOrderSystem::new(p, grid, None, opts)?;
    evolve::solve_first(&sys, grid, phi0.level, &phi0.values, March::Both)
}

/// Copies the level of `sigma_prime` out of `phi`; the declared support is
/// the causal shadow of `supp Φ₀` there.
pub fn restrict(
    phi: &GridSection,
    grid: &Grid1p1,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    sigma_prime: CauchyLine,
) -> Result<CauchyData> {
    phi.check_on(grid)?;
    let level = grid.level_of(sigma_prime.t0)?;
    let t = grid.ts()[level];
    let support = if phi0.support.is_empty() || matches!(phi0.support, Support::Full) {
        phi0.support.clone()
    } else {
        let shadow = shadow_at_times(metric, &phi0.support.intervals(grid), phi0.t0, Direction::Both, &[t], grid.dt)?;
        Support::Intervals(shadow.at(0).to_vec())
    };
    let mut values = phi.level(level).to_vec();
    clear_outside(grid, phi.rank, &support, &mut values);
    Ok(CauchyData {
        t0: t,
        level,
        rank: phi.rank,
        values,
        support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundTripReport {
    pub round_trip_error: f64,
    pub relative_error: f64,
    pub t_sigma: f64,
    pub t_sigma_prime: f64,
}

/// `Σ → Σ′ → Σ` through two reduced solves; reports the L∞ distance to `Φ₀`.
pub fn compatibility_round_trip(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi0: &CauchyData,
    sigma_prime: CauchyLine,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<(RoundTripReport, CauchyData)> {
    phi0.check_on(grid)?;
    require_pair(p, q, metric, grid)?;
    let there = restrict(&reduced_solve(p, q, metric, phi0, grid, opts)?, grid, metric, phi0, sigma_prime)?;
    let back = restrict(&reduced_solve(p, q, metric, &there, grid, opts)?, grid, metric, &there, phi0.sigma())?;
    let err = back
        .values
        .iter()
        .zip(&phi0.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let sup = phi0.sup_norm();
    Ok((
        RoundTripReport {
            round_trip_error: err,
            relative_error: if sup > 0.0 { err / sup } else { err },
            t_sigma: phi0.t0,
            t_sigma_prime: there.t0,
        },
        back,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MatrixField;
    use crate::geometry::Chart1p1;
    use crate::linalg::{c, real_matrix};

    fn line(nx: usize) -> (DiagonalMetric, Grid1p1) {
        let m = DiagonalMetric::minkowski(Chart1p1::new((-0.5, 0.5), (-4.0, 4.0), Topology::Line).unwrap());
        let g = Grid1p1::new(&m, nx, 0.5).unwrap();
        (m, g)
    }

    fn transport() -> FirstOrderOperator {
        let one = MatrixField::identity(1);
        FirstOrderOperator::new(one.clone(), one, MatrixField::zero(1)).unwrap()
    }

    fn gaussian(grid: &Grid1p1, a: f64) -> CauchyData {
        let e = Expr::parse(&format!("exp(-{a}*x^2)")).unwrap();
        CauchyData::from_exprs(grid, CauchyLine { t0: 0.0 }, &[e], &[None], &Window::new(0.0, 3.0, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn window_is_a_plateau() {
        let w = Window::new(0.0, 1.0, 20.0).unwrap();
        assert!((w.eval(0.0) - 1.0).abs() < 1e-15);
        assert!(w.eval(3.0) < 1e-30);
        assert!(Window::new(0.0, 1.0, f64::INFINITY).is_err());
        assert!(w.check_resolved(0.1).is_err());
    }

    #[test]
    fn support_is_sampled_and_outside_values_vanish() {
        let (_, g) = line(257);
        let d = gaussian(&g, 4.0);
        let ivs = d.support.intervals(&g);
        assert_eq!(ivs.len(), 1);
        let edge = (32.2f64 / 4.0).sqrt();
        assert!(ivs[0].hi > edge - 2.0 * g.dx && ivs[0].hi < edge + 2.0 * g.dx, "{ivs:?}");
        for (i, &x) in g.xs().iter().enumerate() {
            if !d.support.contains(x) {
                assert_eq!(d.node(i)[0], ZERO);
            }
        }
        assert!(CauchyData::zeros(&g, CauchyLine { t0: 0.0 }, 2).unwrap().support.is_empty());
    }

    #[test]
    fn transport_normal_derivative_is_minus_slope() {
        let (m, g) = line(513);
        let d = gaussian(&g, 4.0);
        let psi = normal_derivative_data(&transport(), &m, &d, &g).unwrap();
        for (i, &x) in g.xs().iter().enumerate() {
            let exact = 8.0 * x * (-4.0 * x * x).exp();
            assert!((psi.node(i)[0].re - exact).abs() < 2e-3, "x={x}");
        }
        assert_eq!(psi.support, d.support);
        let zero = CauchyData::zeros(&g, CauchyLine { t0: 0.0 }, 1).unwrap();
        assert!(normal_derivative_data(&transport(), &m, &zero, &g).unwrap().values.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn massive_dirac_plateau_normal_derivative() {
        let (m, g) = line(257);
        let mass = 1.5;
        let g0 = real_matrix(2, &[0.0, 1.0, 1.0, 0.0]);
        let p = FirstOrderOperator::new(
            MatrixField::constant(g0.clone()),
            MatrixField::constant(real_matrix(2, &[0.0, -1.0, 1.0, 0.0])),
            MatrixField::identity(2).scale(c(mass, 0.0)),
        )
        .unwrap();
        let spinor = [c(0.3, 0.1), c(-0.7, 0.0)];
        let w = Window::new(0.0, 1.5, 20.0).unwrap();
        let re = [Expr::constant(spinor[0].re), Expr::constant(spinor[1].re)];
        let im = [Some(Expr::constant(spinor[0].im)), None];
        let d = CauchyData::from_exprs(&g, CauchyLine { t0: 0.0 }, &re, &im, &w).unwrap();
        let psi = normal_derivative_data(&p, &m, &d, &g).unwrap();
        let expected = -(g0.try_inverse().unwrap() * crate::linalg::CMatrix::from_column_slice(2, 1, &spinor)) * c(mass, 0.0);
        let i = g.nx / 2;
        for comp in 0..2 {
            assert!((psi.node(i)[comp] - expected[comp]).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_normal_symbol_is_rejected() {
        let (m, g) = line(65);
        let p = FirstOrderOperator::new(MatrixField::zero(1), MatrixField::identity(1), MatrixField::zero(1)).unwrap();
        let d = gaussian(&g, 4.0);
        assert!(matches!(normal_derivative_data(&p, &m, &d, &g), Err(Error::NotPrenormal(_))));
    }

    #[test]
    fn zero_data_give_zero_solution_and_report() {
        let (m, g) = line(129);
        let zero = CauchyData::zeros(&g, CauchyLine { t0: 0.0 }, 1).unwrap();
        let q = FirstOrderOperator::new(MatrixField::identity(1), MatrixField::identity(1).scale(c(-1.0, 0.0)), MatrixField::zero(1)).unwrap();
        let (phi, rep) = solve_cauchy(&transport(), &q, &m, &zero, &g, &SolveOptions::default()).unwrap();
        assert_eq!(phi.sup_norm(), 0.0);
        assert_eq!((rep.residual_l2, rep.residual_linf, rep.leak_abs, rep.trace_defect), (0.0, 0.0, 0.0, 0.0));
        let direct = solve_first_order_direct(&transport(), &m, &zero, &g, &SolveOptions::default()).unwrap();
        assert_eq!(direct.sup_norm(), 0.0);
    }

    #[test]
    fn margin_violation_is_reported() {
        let (m, g) = line(129);
        let e = Expr::parse("exp(-4*(x-3.2)^2)").unwrap();
        let d = CauchyData::from_exprs(&g, CauchyLine { t0: 0.0 }, &[e], &[None], &Window::new(3.2, 0.5, 4.0).unwrap()).unwrap();
        assert!(matches!(
            solve_first_order_direct(&transport(), &m, &d, &g, &SolveOptions::default()),
            Err(Error::CausalMargin(_))
        ));
    }

    #[test]
    fn restrict_at_sigma_is_a_copy() {
        let (m, g) = line(129);
        let d = gaussian(&g, 4.0);
        let phi = solve_first_order_direct(&transport(), &m, &d, &g, &SolveOptions::default()).unwrap();
        let back = restrict(&phi, &g, &m, &d, d.sigma()).unwrap();
        assert_eq!(back.values, d.values);
    }
}
