//! Retarded and advanced Green's operators as driven solves.
//!
//! `G±` solves `(PQ)u = φ` from zero data before (retarded) or after
//! (advanced) the source, and `S± = Q∘G±` inverts `P` on compactly
//! supported sections. Nothing is assembled as a kernel matrix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle_ops::{
    apply, compose, default_sample_points, formal_adjoint, is_complementary_pair, is_normally_hyperbolic, pairing,
    FirstOrderOperator, SecondOrderOperator,
};
use crate::cauchy::{check_causal_margin, leak_outside, CAUSAL_MARGIN_NODES, LEAK_INFLATION_CELLS, SUPPORT_THRESHOLD};
use crate::evolve::{self, March, SecondOrderSystem, SolveOptions};
use crate::geometry::{normalize, shadow_at_times, CausalShadow, DiagonalMetric, Direction, Interval};
use crate::grid::{Grid1p1, GridSection};
use crate::linalg::ZERO;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenDirection {
    Retarded,
    Advanced,
}

impl GreenDirection {
    pub fn opposite(self) -> GreenDirection {
        match self {
            GreenDirection::Retarded => GreenDirection::Advanced,
            GreenDirection::Advanced => GreenDirection::Retarded,
        }
    }

    fn causal(self) -> Direction {
        match self {
            GreenDirection::Retarded => Direction::Future,
            GreenDirection::Advanced => Direction::Past,
        }
    }
}

/// A grid section with a sampled compact support box.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSection {
    pub section: GridSection,
    /// First and last level holding values above the support threshold.
    pub levels: Option<(usize, usize)>,
    /// x-intervals of the box, constant over its levels.
    pub x_support: Vec<Interval>,
}

impl TestSection {
    /// Samples the box of `section`; values outside it are set to zero.
    pub fn new(mut section: GridSection, grid: &Grid1p1) -> Result<TestSection> {
        section.check_on(grid)?;
        if !section.is_finite() {
            return Err(Error::InvalidData("non-finite test section".into()));
        }
        let mut levels: Option<(usize, usize)> = None;
        let mut hot = vec![false; grid.nx];
        for j in 0..grid.nt {
            let mut any = false;
            for (i, h) in hot.iter_mut().enumerate() {
                if section.node(j, i).iter().any(|z| z.norm() > SUPPORT_THRESHOLD) {
                    *h = true;
                    any = true;
                }
            }
            if any {
                levels = Some(match levels {
                    None => (j, j),
                    Some((a, _)) => (a, j),
                });
            }
        }
        let mut x_support = Vec::new();
        let mut i = 0;
        while i < grid.nx {
            if !hot[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < grid.nx && hot[i] {
                i += 1;
            }
            let lo = (grid.xs()[start] - grid.dx).max(grid.chart.x_min);
            let hi = (grid.xs()[i - 1] + grid.dx).min(grid.chart.x_max);
            x_support.push(Interval::new(lo, hi));
        }
        let x_support = normalize(x_support);
        for j in 0..grid.nt {
            let inside_t = levels.is_some_and(|(a, b)| j >= a && j <= b);
            for (i, &x) in grid.xs().iter().enumerate() {
                if !inside_t || !x_support.iter().any(|iv| iv.contains(x)) {
                    section.node_mut(j, i).fill(ZERO);
                }
            }
        }
        Ok(TestSection {
            section,
            levels,
            x_support,
        })
    }

    pub fn from_fn<F>(grid: &Grid1p1, rank: usize, f: F) -> Result<TestSection>
    where
        F: FnMut(f64, f64) -> Result<Vec<Complex64>>,
    {
        TestSection::new(GridSection::from_fn(grid, rank, f)?, grid)
    }

    pub fn is_zero(&self) -> bool {
        self.levels.is_none()
    }

    /// `J±` of the box, evaluated on every level.
    pub fn shadow(&self, metric: &DiagonalMetric, grid: &Grid1p1, direction: GreenDirection) -> Result<Option<CausalShadow>> {
        let Some((a, b)) = self.levels else {
            return Ok(None);
        };
        // J+ of the box is J+ of its bottom face, J- that of its top face
        let t0 = match direction {
            GreenDirection::Retarded => grid.ts()[a],
            GreenDirection::Advanced => grid.ts()[b],
        };
        Ok(Some(shadow_at_times(
            metric,
            &self.x_support,
            t0,
            direction.causal(),
            grid.ts(),
            grid.dt,
        )?))
    }
}

fn check_temporal_margin(source: &TestSection, grid: &Grid1p1, direction: GreenDirection) -> Result<()> {
    let Some((a, b)) = source.levels else {
        return Ok(());
    };
    let ok = match direction {
        GreenDirection::Retarded => a >= CAUSAL_MARGIN_NODES,
        GreenDirection::Advanced => b + CAUSAL_MARGIN_NODES < grid.nt,
    };
    if !ok {
        return Err(Error::CausalMargin(format!(
            "source levels {a}..={b} leave fewer than {CAUSAL_MARGIN_NODES} empty levels before the {} start",
            match direction {
                GreenDirection::Retarded => "retarded",
                GreenDirection::Advanced => "advanced",
            }
        )));
    }
    Ok(())
}

/// `G±φ`: solves `Lu = φ` from zero data at the first (retarded) or last
/// (advanced) level.
pub fn solve_driven(
    l: &SecondOrderOperator,
    metric: &DiagonalMetric,
    source: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<GridSection> {
    source.section.check_on(grid)?;
    if source.section.rank != l.rank {
        return Err(Error::RankMismatch(l.rank, source.section.rank));
    }
    let report = is_normally_hyperbolic(l, metric, &default_sample_points(grid), None)?;
    if !report.pass {
        return Err(Error::NotNormallyHyperbolic(report.max_deviation));
    }
    check_temporal_margin(source, grid, direction)?;
    if let Some(shadow) = source.shadow(metric, grid, direction)? {
        check_causal_margin(&shadow, grid)?;
    }
    let sys = SecondOrderSystem::new(l, grid, Some(&source.section), opts)?;
    let y0 = vec![ZERO; 2 * grid.nx * l.rank];
    let (j0, how) = match direction {
        GreenDirection::Retarded => (0, March::Forward),
        GreenDirection::Advanced => (grid.nt - 1, March::Backward),
    };
    evolve::solve_second(&sys, grid, j0, &y0, how)
}

fn require_pair(p: &FirstOrderOperator, q: &FirstOrderOperator, metric: &DiagonalMetric, grid: &Grid1p1) -> Result<()> {
    let r = is_complementary_pair(p, q, metric, &default_sample_points(grid), None)?;
    if !r.pass {
        return Err(Error::NotPrenormal(format!(
            "(P, Q) is not a complementary pair: symbol deviation {:e}",
            r.pq.max_deviation.max(r.qp.max_deviation)
        )));
    }
    Ok(())
}

/// `S±φ = Q(G±φ)` with `G±` the Green's operator of `PQ`.
pub fn greens_apply(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<GridSection> {
    require_pair(p, q, metric, grid)?;
    let l = compose(p, q)?;
    let u = solve_driven(&l, metric, phi, direction, grid, opts)?;
    apply(q, &u, grid)
}

/// Levels on which two stacked centered time stencils stay centered.
fn interior_levels(grid: &Grid1p1) -> std::ops::Range<usize> {
    2..grid.nt.saturating_sub(2)
}

/// `‖a − b‖ / ‖b‖` in the discrete L² norm over [`interior_levels`].
fn relative_l2(a: &GridSection, b: &GridSection, grid: &Grid1p1) -> Result<f64> {
    a.check_compatible(b)?;
    let (mut num, mut den) = (0.0, 0.0);
    for j in interior_levels(grid) {
        for (x, y) in a.level(j).iter().zip(b.level(j)) {
            num += (x - y).norm_sqr();
            den += y.norm_sqr();
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

/// Relative residual of `P∘S± = Id` on `φ`.
pub fn identity_i_residual(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<f64> {
    let s = greens_apply(p, q, metric, phi, direction, grid, opts)?;
    relative_l2(&apply(p, &s, grid)?, &phi.section, grid)
}

/// Relative residual of `S±∘P = Id` on `ψ`.
pub fn identity_ii_residual(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    psi: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<f64> {
    let source = TestSection::new(apply(p, &psi.section, grid)?, grid)?;
    let s = greens_apply(p, q, metric, &source, direction, grid, opts)?;
    relative_l2(&s, &psi.section, grid)
}

/// `max |S±φ|` outside the inflated `J±(supp φ)`, relative to `‖φ‖_∞`.
pub fn support_leak(
    s_phi: &GridSection,
    metric: &DiagonalMetric,
    phi: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
) -> Result<f64> {
    let Some(shadow) = phi.shadow(metric, grid, direction)? else {
        return Ok(s_phi.sup_norm());
    };
    let leak = leak_outside(s_phi, grid, &shadow, LEAK_INFLATION_CELLS * grid.dx);
    let sup = phi.section.sup_norm();
    Ok(if sup > 0.0 { leak / sup } else { leak })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingReport {
    pub direction: GreenDirection,
    /// `⟨S′∓ψ, f⟩` as `[re, im]`.
    pub lhs: [f64; 2],
    /// `⟨ψ, S±f⟩`.
    pub rhs: [f64; 2],
    pub defect: f64,
    /// The same comparison with `S′±` in place of `S′∓`.
    pub mismatched_lhs: [f64; 2],
    pub mismatched_defect: f64,
}

fn relative_gap(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale > 0.0 {
        (a - b).norm() / scale
    } else {
        0.0
    }
}

/// Compares `⟨S′∓ψ, f⟩` with `⟨ψ, S±f⟩`, where `S′` are the Green's operators
/// of `P*` built from the pair `(P*, Q*)`.
pub fn adjoint_pairing_check(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    psi: &TestSection,
    f: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<PairingReport> {
    let p_star = formal_adjoint(p, metric)?;
    let q_star = formal_adjoint(q, metric)?;
    let s_f = greens_apply(p, q, metric, f, direction, grid, opts)?;
    let rhs = pairing(&psi.section, &s_f, metric, grid)?;
    let dual = greens_apply(&p_star, &q_star, metric, psi, direction.opposite(), grid, opts)?;
    let lhs = pairing(&dual, &f.section, metric, grid)?;
    let wrong = greens_apply(&p_star, &q_star, metric, psi, direction, grid, opts)?;
    let mismatched = pairing(&wrong, &f.section, metric, grid)?;
    Ok(PairingReport {
        direction,
        lhs: [lhs.re, lhs.im],
        rhs: [rhs.re, rhs.im],
        defect: relative_gap(lhs, rhs),
        mismatched_lhs: [mismatched.re, mismatched.im],
        mismatched_defect: relative_gap(mismatched, rhs),
    })
}

/// `‖S±φ − S′±φ‖_∞` for two partners `Q`, `Q_alt` of the same `P`.
pub fn uniqueness_probe(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    q_alt: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<f64> {
    let a = greens_apply(p, q, metric, phi, direction, grid, opts)?;
    let b = greens_apply(p, q_alt, metric, phi, direction, grid, opts)?;
    a.max_abs_diff(&b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreensReport {
    pub direction: GreenDirection,
    pub identity_i_residual: f64,
    pub identity_ii_residual: f64,
    pub support_leak: f64,
    pub pairing_defect: f64,
}

/// Identities (i), (ii), the support condition and the adjoint pairing for
/// one direction. `psi` is used for (ii) and as the dual test section.
pub fn greens_report(
    p: &FirstOrderOperator,
    q: &FirstOrderOperator,
    metric: &DiagonalMetric,
    phi: &TestSection,
    psi: &TestSection,
    direction: GreenDirection,
    grid: &Grid1p1,
    opts: &SolveOptions,
) -> Result<(GreensReport, PairingReport)> {
    let s_phi = greens_apply(p, q, metric, phi, direction, grid, opts)?;
    let identity_i_residual = relative_l2(&apply(p, &s_phi, grid)?, &phi.section, grid)?;
    let support_leak = support_leak(&s_phi, metric, phi, direction, grid)?;
    let identity_ii_residual = identity_ii_residual(p, q, metric, psi, direction, grid, opts)?;
    let pairing = adjoint_pairing_check(p, q, metric, psi, phi, direction, grid, opts)?;
    Ok((
        GreensReport {
            direction,
            identity_i_residual,
            identity_ii_residual,
            support_leak,
            pairing_defect: pairing.defect,
        },
        pairing,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MatrixField;
    use crate::geometry::{Chart1p1, Topology};
    use crate::linalg::c;

    fn setup(nx: usize) -> (DiagonalMetric, Grid1p1) {
        let m = DiagonalMetric::minkowski(Chart1p1::new((-2.0, 2.0), (-7.0, 7.0), Topology::Line).unwrap());
        let g = Grid1p1::new(&m, nx, 0.5).unwrap();
        (m, g)
    }

    fn wave() -> SecondOrderOperator {
        SecondOrderOperator::klein_gordon(1, 0.0)
    }

    fn bump(g: &Grid1p1, tc: f64, xc: f64) -> TestSection {
        TestSection::from_fn(g, 1, |t, x| {
            Ok(vec![c((-25.0 * (t - tc).powi(2) - 8.0 * (x - xc).powi(2)).exp(), 0.0)])
        })
        .unwrap()
    }

    #[test]
    fn zero_source_gives_zero() {
        let (m, g) = setup(65);
        let zero = TestSection::new(GridSection::zeros(&g, 1), &g).unwrap();
        assert!(zero.is_zero());
        let u = solve_driven(&wave(), &m, &zero, GreenDirection::Retarded, &g, &SolveOptions::default()).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn driven_solve_is_linear() {
        let (m, g) = setup(129);
        let a = bump(&g, -0.2, 0.3);
        let b = bump(&g, 0.1, -0.4);
        let (ca, cb) = (c(2.0, -1.0), c(0.5, 0.25));
        let mix = TestSection::new(a.section.combine(ca, &b.section, cb).unwrap(), &g).unwrap();
        let opts = SolveOptions::default();
        let ua = solve_driven(&wave(), &m, &a, GreenDirection::Retarded, &g, &opts).unwrap();
        let ub = solve_driven(&wave(), &m, &b, GreenDirection::Retarded, &g, &opts).unwrap();
        let um = solve_driven(&wave(), &m, &mix, GreenDirection::Retarded, &g, &opts).unwrap();
        let expect = ua.combine(ca, &ub, cb).unwrap();
        assert!(um.max_abs_diff(&expect).unwrap() < 1e-12 * expect.sup_norm());
    }

    #[test]
    fn temporal_margin_is_enforced() {
        let (m, g) = setup(65);
        let early = bump(&g, -1.5, 0.0);
        let r = solve_driven(&wave(), &m, &early, GreenDirection::Retarded, &g, &SolveOptions::default());
        assert!(matches!(r, Err(Error::CausalMargin(_))));
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let (m, g) = setup(65);
        let one = MatrixField::identity(1);
        let p = FirstOrderOperator::new(one.clone(), one.clone(), MatrixField::zero(1)).unwrap();
        let phi = bump(&g, 0.0, 0.0);
        let r = greens_apply(&p, &p, &m, &phi, GreenDirection::Retarded, &g, &SolveOptions::default());
        assert!(matches!(r, Err(Error::NotPrenormal(_))));
    }
}
