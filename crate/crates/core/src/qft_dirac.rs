//! The 1+1 Dirac model: Clifford representation, the complementary pair
//! `(D + A, D − A)`, the Dirac adjoint and current, and the conserved
//! Hermitian product `β_Σ(Ψ, Φ) = ∫_Σ n_a j^a(Ψ, Φ) dμ_Σ` on Cauchy data.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle_ops::{is_complementary_pair, FirstOrderOperator};
use crate::cauchy::{restrict, solve_cauchy, CauchyData};
use crate::evolve::SolveOptions;
use crate::expr::Expr;
use crate::field::{Axis, MatrixField};
use crate::geometry::{CauchyLine, Chart1p1, DiagonalMetric, Topology};
use crate::grid::{Grid1p1, GridSection};
use crate::linalg::{c, max_abs_entry, CMatrix, ZERO};
use crate::{Error, Result};

/// Largest Clifford-relation defect accepted by [`CliffordRep::validate`].
pub const CLIFFORD_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct CliffordRep {
    pub gamma0: CMatrix,
    pub gamma1: CMatrix,
}

impl Default for CliffordRep {
    /// `γ⁰ = [[0,1],[1,0]]`, `γ¹ = [[0,−1],[1,0]]`, so `γ⁰γ¹ = diag(1, −1)`.
    fn default() -> CliffordRep {
        CliffordRep {
            gamma0: CMatrix::from_row_slice(2, 2, &[ZERO, c(1.0, 0.0), c(1.0, 0.0), ZERO]),
            gamma1: CMatrix::from_row_slice(2, 2, &[ZERO, c(-1.0, 0.0), c(1.0, 0.0), ZERO]),
        }
    }
}

impl CliffordRep {
    /// Largest entry of `γ⁰γ⁰ − Id`, `γ¹γ¹ + Id`, `{γ⁰, γ¹}` and `γ⁰ − γ⁰†`.
    pub fn relation_defect(&self) -> f64 {
        let id = CMatrix::identity(2, 2);
        let (g0, g1) = (&self.gamma0, &self.gamma1);
        [
            g0 * g0 - &id,
            g1 * g1 + &id,
            g0 * g1 + g1 * g0,
            g0 - g0.adjoint(),
        ]
        .iter()
        .map(max_abs_entry)
        .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma0.shape() != (2, 2) || self.gamma1.shape() != (2, 2) {
            return Err(Error::InvalidData("Dirac matrices must be 2x2".into()));
        }
        let d = self.relation_defect();
        if d > CLIFFORD_TOLERANCE {
            return Err(Error::InvalidData(format!("Clifford relations fail by {d:e}")));
        }
        Ok(())
    }

    pub fn gamma(&self, index: CurrentIndex) -> &CMatrix {
        match index {
            CurrentIndex::T => &self.gamma0,
            CurrentIndex::X => &self.gamma1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurrentIndex {
    T,
    X,
}

#[derive(Debug, Clone)]
pub struct DiracModel {
    pub rep: CliffordRep,
    pub mass: f64,
    /// Zeroth-order term `A`; `None` means `m·Id`.
    pub potential: Option<MatrixField>,
}

impl DiracModel {
    pub fn new(mass: f64) -> DiracModel {
        DiracModel {
            rep: CliffordRep::default(),
            mass,
            potential: None,
        }
    }

    pub fn with_potential(mut self, potential: MatrixField) -> DiracModel {
        self.potential = Some(potential);
        self
    }

    pub fn potential(&self) -> MatrixField {
        self.potential
            .clone()
            .unwrap_or_else(|| MatrixField::identity(2).scale(c(self.mass, 0.0)))
    }
}

fn dirac_operators(model: &DiracModel, a_t: MatrixField, a_x: MatrixField) -> Result<(FirstOrderOperator, FirstOrderOperator)> {
    model.rep.validate()?;
    if !(model.mass >= 0.0) {
        return Err(Error::InvalidData(format!("mass must be nonnegative, got {}", model.mass)));
    }
    let a = model.potential();
    if a.rank() != 2 {
        return Err(Error::RankMismatch(2, a.rank()));
    }
    let p = FirstOrderOperator::new(a_t.clone(), a_x.clone(), a.clone())?;
    let q = FirstOrderOperator::new(a_t, a_x, a.scale(c(-1.0, 0.0)))?;
    Ok((p, q))
}

/// `P = γ⁰∂_t + γ¹∂_x + A`, `Q = γ⁰∂_t + γ¹∂_x − A`, checked as a
/// complementary pair on Minkowski space.
pub fn build_dirac_pair(model: &DiracModel) -> Result<(FirstOrderOperator, FirstOrderOperator)> {
    let (p, q) = dirac_operators(
        model,
        MatrixField::constant(model.rep.gamma0.clone()),
        MatrixField::constant(model.rep.gamma1.clone()),
    )?;
    let chart = Chart1p1::new((-1.0, 1.0), (-1.0, 1.0), Topology::Line)?;
    let points = [(0.0, 0.0), (0.5, -0.25), (-0.75, 0.5)];
    let report = is_complementary_pair(&p, &q, &DiagonalMetric::minkowski(chart), &points, None)?;
    if !report.pass {
        return Err(Error::NotPrenormal(format!(
            "Dirac pair fails the symbol check by {:e}",
            report.pq.max_deviation.max(report.qp.max_deviation)
        )));
    }
    Ok((p, q))
}

/// The pair with orthonormal-frame coefficients `Aᵗ = γ⁰/α`, `Aˣ = γ¹/β`,
/// whose compositions have principal symbol `g(ξ, ξ)·Id`.
pub fn build_dirac_pair_on(model: &DiracModel, metric: &DiagonalMetric) -> Result<(FirstOrderOperator, FirstOrderOperator)> {
    let frame = |gamma: &CMatrix, e: &Expr| -> Result<MatrixField> {
        let inv = Expr::parse(&format!("1/({})", e.ast()))?;
        Ok(MatrixField::constant(gamma.clone()).mul(&MatrixField::scalar_expr(2, inv)))
    };
    dirac_operators(model, frame(&model.rep.gamma0, &metric.alpha)?, frame(&model.rep.gamma1, &metric.beta)?)
}

fn require_spinor(phi: &GridSection) -> Result<()> {
    if phi.rank != 2 {
        return Err(Error::RankMismatch(2, phi.rank));
    }
    Ok(())
}

fn adjoint_node(v: &[Complex64], g0: &CMatrix) -> [Complex64; 2] {
    let mut out = [ZERO; 2];
    for (j, o) in out.iter_mut().enumerate() {
        *o = v[0].conj() * g0[(0, j)] + v[1].conj() * g0[(1, j)];
    }
    out
}

/// `Φ⁺ = Φ†γ⁰` per node.
pub fn dirac_adjoint(phi: &GridSection, rep: &CliffordRep) -> Result<GridSection> {
    require_spinor(phi)?;
    let mut out = phi.clone();
    for (o, v) in out.data.chunks_mut(2).zip(phi.data.chunks(2)) {
        o.copy_from_slice(&adjoint_node(v, &rep.gamma0));
    }
    Ok(out)
}

/// `Ψ⁺γ^aΦ` for one node.
fn current_node(psi: &[Complex64], phi: &[Complex64], rep: &CliffordRep, index: CurrentIndex) -> Complex64 {
    let bar = adjoint_node(psi, &rep.gamma0);
    let g = rep.gamma(index);
    let mut s = ZERO;
    for i in 0..2 {
        s += bar[i] * (g[(i, 0)] * phi[0] + g[(i, 1)] * phi[1]);
    }
    s
}

/// The current component `j^a(Ψ, Φ) = Ψ⁺γ^aΦ` as a rank-1 section.
pub fn dirac_current(psi: &GridSection, phi: &GridSection, rep: &CliffordRep, index: CurrentIndex) -> Result<GridSection> {
    require_spinor(psi)?;
    psi.check_compatible(phi)?;
    let data = psi
        .data
        .chunks(2)
        .zip(phi.data.chunks(2))
        .map(|(a, b)| current_node(a, b, rep, index))
        .collect();
    Ok(GridSection {
        nt: psi.nt,
        nx: psi.nx,
        rank: 1,
        data,
    })
}

/// Trapezoidal `∫ Ψ⁺γ⁰Φ β(t, x) dx` for node-major spinor rows at time `t`.
fn beta_row(psi: &[Complex64], phi: &[Complex64], t: f64, metric: &DiagonalMetric, grid: &Grid1p1, rep: &CliffordRep) -> Result<Complex64> {
    let mut s = ZERO;
    for (i, &x) in grid.xs().iter().enumerate() {
        let (a, b) = (&psi[2 * i..2 * i + 2], &phi[2 * i..2 * i + 2]);
        if a.iter().all(|z| *z == ZERO) || b.iter().all(|z| *z == ZERO) {
            continue;
        }
        let (_, beta) = metric.components(t, x)?;
        s += current_node(a, b, rep, CurrentIndex::T) * (beta * grid.x_weight(i));
    }
    Ok(s)
}

/// `β_Σ(Ψ, Φ)` on the stored level nearest `sigma`.
pub fn beta_sigma(
    psi: &GridSection,
    phi: &GridSection,
    sigma: CauchyLine,
    metric: &DiagonalMetric,
    grid: &Grid1p1,
    rep: &CliffordRep,
) -> Result<Complex64> {
    require_spinor(psi)?;
    psi.check_compatible(phi)?;
    psi.check_on(grid)?;
    let j = grid.level_of(sigma.t0)?;
    beta_row(psi.level(j), phi.level(j), grid.ts()[j], metric, grid, rep)
}

/// `β_Σ` of two Cauchy data on the same level.
pub fn beta_of_data(psi: &CauchyData, phi: &CauchyData, metric: &DiagonalMetric, grid: &Grid1p1, rep: &CliffordRep) -> Result<Complex64> {
    if psi.rank != 2 || phi.rank != 2 {
        return Err(Error::RankMismatch(2, psi.rank.max(phi.rank)));
    }
    if psi.level != phi.level {
        return Err(Error::GridMismatch("data on different levels".into()));
    }
    beta_row(&psi.values, &phi.values, psi.t0, metric, grid, rep)
}

/// Largest violation of the on-shell identity behind `∂_μ(ρΨ⁺A^μΦ) = 0` over
/// `points`: the anti-Hermitian part of `H^μ = γ⁰A^μ` and
/// `γ⁰B + (γ⁰B)† − ρ⁻¹∂_μ(ρH^μ)` with `ρ = αβ`. Zero means `β_Σ` of two
/// solutions does not depend on `Σ`.
pub fn current_conservation_defect(
    p: &FirstOrderOperator,
    metric: &DiagonalMetric,
    points: &[(f64, f64)],
    rep: &CliffordRep,
) -> Result<f64> {
    if p.rank != 2 {
        return Err(Error::RankMismatch(2, p.rank));
    }
    let g0 = MatrixField::constant(rep.gamma0.clone());
    let rho = MatrixField::scalar_expr(2, Expr::parse(&format!("({})*({})", metric.alpha.ast(), metric.beta.ast()))?);
    let h_t = g0.mul(&p.a_t);
    let h_x = g0.mul(&p.a_x);
    let flux_t = rho.mul(&h_t).derivative(Axis::T);
    let flux_x = rho.mul(&h_x).derivative(Axis::X);
    let g0b = g0.mul(&p.effective_b());
    let mut worst: f64 = 0.0;
    for &(t, x) in points {
        let r = metric.volume_density(t, x)?;
        for h in [&h_t, &h_x] {
            let m = h.eval(t, x)?;
            worst = worst.max(max_abs_entry(&(&m - m.adjoint())));
        }
        let k = g0b.eval(t, x)?;
        let div = (flux_t.eval(t, x)? + flux_x.eval(t, x)?) * c(1.0 / r, 0.0);
        worst = worst.max(max_abs_entry(&(&k + k.adjoint() - div)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HermitianReport {
    /// `β_Σ(Ψ, Φ)` on the first level, as `[re, im]`.
    pub value: [f64; 2],
    /// Smallest `β_Σ(Φ, Φ)` or `β_Σ(Ψ, Ψ)` over the levels.
    pub positivity_margin: f64,
    /// Largest pairwise `|β_i − β_j| / max |β|`.
    pub hypersurface_drift: f64,
    /// `|β(Ψ, Φ) − conj β(Φ, Ψ)| / |β(Ψ, Φ)|`, worst level.
    pub hermitian_defect: f64,
    pub levels: Vec<f64>,
    pub values: Vec<[f64; 2]>,
}

/// Evaluates `β_Σ(Ψ, Φ)` on each requested level.
pub fn hypersurface_independence(
    phi: &GridSection,
    psi: &GridSection,
    t_levels: &[f64],
    metric: &DiagonalMetric,
    grid: &Grid1p1,
    rep: &CliffordRep,
) -> Result<HermitianReport> {
    if t_levels.is_empty() {
        return Err(Error::InvalidData("no hypersurfaces requested".into()));
    }
    require_spinor(phi)?;
    phi.check_compatible(psi)?;
    phi.check_on(grid)?;
    let per_level: Vec<Result<[Complex64; 4]>> = t_levels
        .par_iter()
        .map(|&t| {
            let s = CauchyLine { t0: t };
            Ok([
                beta_sigma(psi, phi, s, metric, grid, rep)?,
                beta_sigma(phi, psi, s, metric, grid, rep)?,
                beta_sigma(phi, phi, s, metric, grid, rep)?,
                beta_sigma(psi, psi, s, metric, grid, rep)?,
            ])
        })
        .collect();
    let mut values = Vec::with_capacity(t_levels.len());
    let mut positivity = f64::INFINITY;
    let mut hermitian: f64 = 0.0;
    for r in per_level {
        let [pp, pp_rev, aa, bb] = r?;
        positivity = positivity.min(aa.re).min(bb.re);
        let scale = pp.norm().max(pp_rev.norm());
        if scale > 0.0 {
            hermitian = hermitian.max((pp - pp_rev.conj()).norm() / scale);
        }
        values.push(pp);
    }
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut drift: f64 = 0.0;
    if scale > 0.0 {
        for a in &values {
            for b in &values {
                drift = drift.max((a - b).norm() / scale);
            }
        }
    }
    Ok(HermitianReport {
        value: [values[0].re, values[0].im],
        positivity_margin: positivity,
        hypersurface_drift: drift,
        hermitian_defect: hermitian,
        levels: t_levels.iter().map(|&t| grid.ts()[grid.level_of(t).unwrap_or(0)]).collect(),
        values: values.iter().map(|z| [z.re, z.im]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsometryReport {
    pub t_sigma: f64,
    pub t_sigma_prime: f64,
    /// Row-major Gram matrices as `[re, im]` entries.
    pub gram_sigma: Vec<Vec<[f64; 2]>>,
    pub gram_sigma_prime: Vec<Vec<[f64; 2]>>,
    /// `max |G − G′| / max |G|`.
    pub max_relative_mismatch: f64,
    pub min_eigenvalue_sigma: f64,
    pub min_eigenvalue_sigma_prime: f64,
}

fn gram(rows: &[Vec<Complex64>], t: f64, metric: &DiagonalMetric, grid: &Grid1p1, rep: &CliffordRep) -> Result<CMatrix> {
    let n = rows.len();
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = beta_row(&rows[i], &rows[j], t, metric, grid, rep)?;
        }
    }
    Ok(g)
}

fn min_eigenvalue(g: &CMatrix) -> f64 {
    if g.nrows() == 0 {
        return 0.0;
    }
    let herm = (g + g.adjoint()) * c(0.5, 0.0);
    SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn gram_json(g: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..g.nrows())
        .map(|i| (0..g.ncols()).map(|j| [g[(i, j)].re, g[(i, j)].im]).collect())
        .collect()
}

/// Compares the `β` Gram matrix of a data set on `Σ` with that of the
/// evolved data on `Σ′`.
pub fn data_space_isometry_check(
    data: &[CauchyData],
    sigma_prime: CauchyLine,
    metric: &DiagonalMetric,
    pair: (&FirstOrderOperator, &FirstOrderOperator),
    grid: &Grid1p1,
    rep: &CliffordRep,
    opts: &SolveOptions,
) -> Result<IsometryReport> {
    let first = data.first().ok_or_else(|| Error::InvalidData("empty data set".into()))?;
    if data.iter().any(|d| d.level != first.level) {
        return Err(Error::InvalidData("all data must share one hypersurface".into()));
    }
    let (p, q) = pair;
    let evolved: Vec<Result<CauchyData>> = data
        .par_iter()
        .map(|d| {
            let (phi, _) = solve_cauchy(p, q, metric, d, grid, opts)?;
            restrict(&phi, grid, metric, d, sigma_prime)
        })
        .collect();
    let evolved: Vec<CauchyData> = evolved.into_iter().collect::<Result<_>>()?;
    let here: Vec<Vec<Complex64>> = data.iter().map(|d| d.values.clone()).collect();
    let there: Vec<Vec<Complex64>> = evolved.iter().map(|d| d.values.clone()).collect();
    let t_prime = evolved[0].t0;
    let g = gram(&here, first.t0, metric, grid, rep)?;
    let g_prime = gram(&there, t_prime, metric, grid, rep)?;
    let scale = max_abs_entry(&g);
    let mismatch = if scale > 0.0 { max_abs_entry(&(&g - &g_prime)) / scale } else { 0.0 };
    Ok(IsometryReport {
        t_sigma: first.t0,
        t_sigma_prime: t_prime,
        gram_sigma: gram_json(&g),
        gram_sigma_prime: gram_json(&g_prime),
        max_relative_mismatch: mismatch,
        min_eigenvalue_sigma: min_eigenvalue(&g),
        min_eigenvalue_sigma_prime: min_eigenvalue(&g_prime),
    })
}
