//! Subcommand orchestration. Each battery item runs on its own thread and
//! returns a [`Part`]; parts are merged in a fixed order so the report does
//! not depend on scheduling.

use std::collections::BTreeMap;
use std::time::Instant;

use prehyp_core::bundle_ops::{default_sample_points, is_complementary_pair, principal_symbol_1};
use prehyp_core::cauchy::{compatibility_round_trip, solve_cauchy, solve_first_order_direct, CauchyData};
use prehyp_core::convergence::ConvergenceTable;
use prehyp_core::geometry::inverse_metric_on_covector;
use prehyp_core::greens::{
    adjoint_pairing_check, greens_apply, greens_report, identity_ii_residual, support_leak, GreenDirection, PairingReport,
};
use prehyp_core::linalg::{c, max_abs_entry};
use prehyp_core::qft_dirac::{
    current_conservation_defect, data_space_isometry_check, dirac_current, hypersurface_independence, CurrentIndex,
};
use prehyp_core::{CauchyLine, GridSection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Format, ScenarioConfig, Tolerances};
use crate::error::CliError;
use crate::report::*;
use crate::scenario::Scenario;

/// Errors below this are at the level of floating-point roundoff, where an
/// observed order carries no information.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;

/// Largest [`current_conservation_defect`] for which `β_Σ` is treated as
/// conserved.
pub const CONSERVATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Solve,
    DirectVsReduced,
    RoundTrip,
    Greens,
    AdjointCheck,
    Beta,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Solve => "solve",
            Study::DirectVsReduced => "direct-vs-reduced",
            Study::RoundTrip => "round-trip",
            Study::Greens => "greens",
            Study::AdjointCheck => "adjoint-check",
            Study::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CheckPair,
    Solve,
    DirectVsReduced,
    Greens,
    AdjointCheck,
    Beta,
    Isometry,
    Convergence(Study),
    VerifyAll,
}

impl Command {
    pub fn name(self) -> String {
        match self {
            Command::CheckPair => "check-pair".into(),
            Command::Solve => "solve".into(),
            Command::DirectVsReduced => "direct-vs-reduced".into(),
            Command::Greens => "greens".into(),
            Command::AdjointCheck => "adjoint-check".into(),
            Command::Beta => "beta".into(),
            Command::Isometry => "isometry".into(),
            Command::Convergence(s) => format!("convergence {}", s.name()),
            Command::VerifyAll => "verify-all".into(),
        }
    }

    fn items(self) -> Vec<Item> {
        match self {
            Command::CheckPair => vec![Item::Pair],
            Command::Solve => vec![Item::Solve],
            Command::DirectVsReduced => vec![Item::Reduction],
            Command::Greens => vec![Item::Greens],
            Command::AdjointCheck => vec![Item::Adjoint],
            Command::Beta => vec![Item::Beta],
            Command::Isometry => vec![Item::Isometry],
            Command::Convergence(s) => vec![Item::Convergence(s)],
            Command::VerifyAll => vec![
                Item::Pair,
                Item::Solve,
                Item::Reduction,
                Item::Greens,
                Item::Adjoint,
                Item::Beta,
                Item::Isometry,
                Item::Convergence(Study::Solve),
                Item::Convergence(Study::DirectVsReduced),
                Item::Convergence(Study::RoundTrip),
                Item::Convergence(Study::Greens),
                Item::Convergence(Study::AdjointCheck),
                Item::Convergence(Study::Beta),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Pair,
    Solve,
    Reduction,
    Greens,
    Adjoint,
    Beta,
    Isometry,
    Convergence(Study),
}

impl Item {
    fn name(self) -> String {
        match self {
            Item::Pair => "check-pair".into(),
            Item::Solve => "solve".into(),
            Item::Reduction => "direct-vs-reduced".into(),
            Item::Greens => "greens".into(),
            Item::Adjoint => "adjoint-check".into(),
            Item::Beta => "beta".into(),
            Item::Isometry => "isometry".into(),
            Item::Convergence(s) => format!("convergence-{}", s.name()),
        }
    }
}

#[derive(Default)]
struct Part {
    checks: Vec<Check>,
    skipped: Vec<Skipped>,
    pair: Option<PairSection>,
    solve: Option<prehyp_core::cauchy::SolveReport>,
    reduction: Option<ReductionSection>,
    greens: Option<Vec<GreensSection>>,
    adjoint: Option<Vec<PairingReport>>,
    beta: Option<BetaSection>,
    isometry: Option<IsometrySection>,
    tables: Vec<ConvergenceTable>,
    csv: Vec<CsvDump>,
}

impl Part {
    fn skip(name: &str, reason: impl Into<String>) -> Part {
        Part {
            skipped: vec![Skipped {
                name: name.into(),
                reason: reason.into(),
            }],
            ..Part::default()
        }
    }
}

struct Ctx<'a> {
    config: &'a ScenarioConfig,
    base: &'a Scenario,
    tol: &'a Tolerances,
    seed: u64,
    /// A missing prerequisite is an error for single subcommands and a skip
    /// inside `verify-all`.
    strict: bool,
}

impl Ctx<'_> {
    fn unavailable(&self, name: &str, key: &str, reason: &str) -> Result<Part, CliError> {
        if self.strict {
            Err(CliError::Validation {
                key: key.into(),
                message: format!("{name}: {reason}"),
            })
        } else {
            Ok(Part::skip(name, reason))
        }
    }

    fn sources(&self) -> Option<(&prehyp_core::greens::TestSection, &prehyp_core::greens::TestSection)> {
        Some((self.base.source.as_ref()?, self.base.dual_source.as_ref()?))
    }

    fn csv_enabled(&self) -> bool {
        self.config.output.as_ref().is_none_or(|o| o.formats.contains(&Format::Csv))
    }
}

pub struct Outcome {
    pub report: RunReport,
    pub timings: BTreeMap<String, f64>,
    pub csv: Vec<CsvDump>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            0
        } else {
            2
        }
    }
}

const DIRECTIONS: [GreenDirection; 2] = [GreenDirection::Retarded, GreenDirection::Advanced];

fn direction_name(d: GreenDirection) -> &'static str {
    match d {
        GreenDirection::Retarded => "retarded",
        GreenDirection::Advanced => "advanced",
    }
}

fn symbol_probe(s: &Scenario, seed: u64, samples: usize) -> Result<SymbolProbe, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = &s.grid.chart;
    let k = s.p.rank as i32;
    let mut probe = SymbolProbe {
        seed,
        samples: 0,
        all_invertible: true,
        min_determinant_margin: f64::INFINITY,
        max_product_defect: 0.0,
        symmetric_symbols: true,
    };
    let mut attempts = 0;
    while probe.samples < samples {
        attempts += 1;
        if attempts > 100 * samples.max(1) {
            return Err(CliError::Internal("could not draw non-null covectors".into()));
        }
        let pt = (rng.gen_range(chart.t_min..=chart.t_max), rng.gen_range(chart.x_min..chart.x_max));
        let xi = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let g = inverse_metric_on_covector(&s.metric, pt, xi)?;
        if g.abs() < 1e-6 {
            continue;
        }
        let sp = principal_symbol_1(&s.p, pt, xi)?;
        let sq = principal_symbol_1(&s.q, pt, xi)?;
        let dp = sp.clone().lu().determinant().norm();
        let dq = sq.clone().lu().determinant().norm();
        let scale = g.abs().powi(k);
        probe.all_invertible &= dp > 1e-12 * scale.sqrt();
        probe.min_determinant_margin = probe.min_determinant_margin.min(dp - scale.sqrt());
        probe.max_product_defect = probe.max_product_defect.max((dp * dq - scale).abs() / scale);
        probe.symmetric_symbols &= max_abs_entry(&(&sp - &sq)) <= 1e-14 * (1.0 + max_abs_entry(&sp));
        probe.samples += 1;
    }
    if samples == 0 {
        probe.min_determinant_margin = 0.0;
    }
    Ok(probe)
}

fn check_pair(ctx: &Ctx) -> Result<Part, CliError> {
    let s = ctx.base;
    let report = is_complementary_pair(&s.p, &s.q, &s.metric, &default_sample_points(&s.grid), None)?;
    let probe = symbol_probe(s, ctx.seed, ctx.config.analysis.covector_samples)?;
    let mut part = Part::default();
    let dev = report.pq.max_deviation.max(report.qp.max_deviation);
    part.checks.push(Check::new("pair.symbol_deviation", dev, Relation::AtMost, ctx.tol.symbol));
    let product = Check::new("pair.symbol_product_identity", probe.max_product_defect, Relation::AtMost, 1e-10);
    part.checks.push(if probe.all_invertible {
        product
    } else {
        Check {
            pass: false,
            ..product.with_note("a sampled symbol is singular")
        }
    });
    if probe.symmetric_symbols {
        part.checks.push(Check::new(
            "pair.determinant_bound",
            probe.min_determinant_margin,
            Relation::AtLeast,
            -ctx.tol.determinant,
        ));
    } else {
        part.skipped.push(Skipped {
            name: "pair.determinant_bound".into(),
            reason: "the bound |det σ_P| ≥ |g|^{k/2} needs σ_Q = σ_P".into(),
        });
    }
    part.pair = Some(PairSection { report, probe });
    Ok(part)
}

fn solution_csv(name: &str, phi: &GridSection, s: &Scenario) -> CsvDump {
    let g = &s.grid;
    let mut header = vec!["t".to_string(), "x".to_string()];
    for k in 0..phi.rank {
        header.push(format!("re{k}"));
        header.push(format!("im{k}"));
    }
    let jt = ((g.nt - 1) / 64).max(1);
    let ix = (g.nx / 256).max(1);
    let mut levels: Vec<usize> = (0..g.nt).step_by(jt).collect();
    if *levels.last().unwrap() != g.nt - 1 {
        levels.push(g.nt - 1);
    }
    let mut rows = Vec::new();
    for j in levels {
        for i in (0..g.nx).step_by(ix) {
            let mut row = vec![g.ts()[j], g.xs()[i]];
            for z in phi.node(j, i) {
                row.push(z.re);
                row.push(z.im);
            }
            rows.push(row);
        }
    }
    CsvDump {
        name: name.into(),
        header,
        rows,
    }
}

fn solve(ctx: &Ctx) -> Result<Part, CliError> {
    let s = ctx.base;
    let (phi, report) = solve_cauchy(&s.p, &s.q, &s.metric, &s.phi0, &s.grid, &s.opts)?;
    let mut part = Part::default();
    part.checks.push(Check::new("solve.leak", report.leak_rel, Relation::AtMost, ctx.tol.leak));
    if ctx.csv_enabled() {
        part.csv.push(solution_csv("solution.csv", &phi, s));
    }
    part.solve = Some(report);
    Ok(part)
}

fn reduction_gap(s: &Scenario) -> Result<ReductionSection, CliError> {
    let (reduced, _) = solve_cauchy(&s.p, &s.q, &s.metric, &s.phi0, &s.grid, &s.opts)?;
    let direct = solve_first_order_direct(&s.p, &s.metric, &s.phi0, &s.grid, &s.opts)?;
    let absolute_gap = reduced.max_abs_diff(&direct)?;
    let direct_sup = direct.sup_norm();
    Ok(ReductionSection {
        relative_gap: if direct_sup > 0.0 { absolute_gap / direct_sup } else { absolute_gap },
        absolute_gap,
        direct_sup,
    })
}

fn reduction(ctx: &Ctx) -> Result<Part, CliError> {
    let r = reduction_gap(ctx.base)?;
    let mut part = Part::default();
    part.checks.push(Check::new("direct_vs_reduced.relative_gap", r.relative_gap, Relation::AtMost, ctx.tol.reduction));
    part.reduction = Some(r);
    Ok(part)
}

fn pairing_checks(part: &mut Part, prefix: &str, r: &PairingReport, tol: &Tolerances) {
    part.checks.push(Check::new(format!("{prefix}.pairing_defect"), r.defect, Relation::AtMost, tol.pairing));
    part.checks.push(Check::new(
        format!("{prefix}.mismatched_control"),
        r.mismatched_defect,
        Relation::AtLeast,
        tol.control,
    ));
}

fn greens_section(s: &Scenario, dir: GreenDirection) -> Result<GreensSection, CliError> {
    let (phi, psi) = (s.source.as_ref().expect("checked"), s.dual_source.as_ref().expect("checked"));
    if !s.p.has_connection() && !s.q.has_connection() {
        let (r, pairing) = greens_report(&s.p, &s.q, &s.metric, phi, psi, dir, &s.grid, &s.opts)?;
        return Ok(GreensSection {
            direction: dir,
            identity_i_residual: r.identity_i_residual,
            identity_ii_residual: r.identity_ii_residual,
            support_leak: r.support_leak,
            pairing: Some(pairing),
        });
    }
    let s_phi = greens_apply(&s.p, &s.q, &s.metric, phi, dir, &s.grid, &s.opts)?;
    let residual = prehyp_core::bundle_ops::apply(&s.p, &s_phi, &s.grid)?;
    Ok(GreensSection {
        direction: dir,
        identity_i_residual: interior_relative_l2(&residual, &phi.section, s),
        identity_ii_residual: identity_ii_residual(&s.p, &s.q, &s.metric, psi, dir, &s.grid, &s.opts)?,
        support_leak: support_leak(&s_phi, &s.metric, phi, dir, &s.grid)?,
        pairing: None,
    })
}

/// Same measure as the core identity residuals: levels `2..nt−2`.
fn interior_relative_l2(a: &GridSection, b: &GridSection, s: &Scenario) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 2..s.grid.nt.saturating_sub(2) {
        for (x, y) in a.level(j).iter().zip(b.level(j)) {
            num += (x - y).norm_sqr();
            den += y.norm_sqr();
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn greens(ctx: &Ctx) -> Result<Part, CliError> {
    if ctx.sources().is_none() {
        return ctx.unavailable("greens", "source", "[source] and [dual_source] required");
    }
    let sections: Vec<Result<GreensSection, CliError>> = DIRECTIONS.par_iter().map(|&d| greens_section(ctx.base, d)).collect();
    let mut part = Part::default();
    let mut out = Vec::new();
    for sec in sections {
        let sec = sec?;
        let prefix = format!("greens.{}", direction_name(sec.direction));
        let tol = ctx.tol;
        part.checks.push(Check::new(format!("{prefix}.identity_i"), sec.identity_i_residual, Relation::AtMost, tol.identity));
        part.checks.push(Check::new(format!("{prefix}.identity_ii"), sec.identity_ii_residual, Relation::AtMost, tol.identity));
        part.checks.push(Check::new(format!("{prefix}.support_leak"), sec.support_leak, Relation::AtMost, tol.leak));
        match &sec.pairing {
            Some(r) => pairing_checks(&mut part, &prefix, r, tol),
            None => part.skipped.push(Skipped {
                name: format!("{prefix}.pairing_defect"),
                reason: "formal adjoint unavailable for operators with a connection".into(),
            }),
        }
        out.push(sec);
    }
    part.greens = Some(out);
    Ok(part)
}

fn pairings(s: &Scenario) -> Result<Vec<PairingReport>, CliError> {
    let (phi, psi) = (s.source.as_ref().expect("checked"), s.dual_source.as_ref().expect("checked"));
    let rs: Vec<Result<PairingReport, CliError>> = DIRECTIONS
        .par_iter()
        .map(|&d| Ok(adjoint_pairing_check(&s.p, &s.q, &s.metric, psi, phi, d, &s.grid, &s.opts)?))
        .collect();
    rs.into_iter().collect()
}

fn adjoint(ctx: &Ctx) -> Result<Part, CliError> {
    if ctx.sources().is_none() {
        return ctx.unavailable("adjoint-check", "source", "[source] and [dual_source] required");
    }
    if ctx.base.p.has_connection() || ctx.base.q.has_connection() {
        return ctx.unavailable("adjoint-check", "operator_P.omega_t", "formal adjoint unavailable for operators with a connection");
    }
    let reports = pairings(ctx.base)?;
    let mut part = Part::default();
    for r in &reports {
        pairing_checks(&mut part, &format!("adjoint.{}", direction_name(r.direction)), r, ctx.tol);
    }
    part.adjoint = Some(reports);
    Ok(part)
}

fn conservation(s: &Scenario) -> Result<f64, CliError> {
    Ok(current_conservation_defect(&s.p, &s.metric, &default_sample_points(&s.grid), &s.rep)?)
}

/// The second field for products: `second_data` when given, else `Φ₀`.
fn partner(s: &Scenario) -> &CauchyData {
    s.second.as_ref().unwrap_or(&s.phi0)
}

fn frozen(data: &CauchyData, s: &Scenario) -> GridSection {
    let mut out = GridSection::zeros(&s.grid, data.rank);
    for j in 0..s.grid.nt {
        out.level_mut(j).copy_from_slice(&data.values);
    }
    out
}

fn beta_drift(s: &Scenario, levels: &[f64]) -> Result<(prehyp_core::qft_dirac::HermitianReport, GridSection, GridSection), CliError> {
    let (phi, _) = solve_cauchy(&s.p, &s.q, &s.metric, &s.phi0, &s.grid, &s.opts)?;
    let psi = match &s.second {
        Some(d) => solve_cauchy(&s.p, &s.q, &s.metric, d, &s.grid, &s.opts)?.0,
        None => phi.clone(),
    };
    let report = hypersurface_independence(&phi, &psi, levels, &s.metric, &s.grid, &s.rep)?;
    Ok((report, phi, psi))
}

fn beta(ctx: &Ctx) -> Result<Part, CliError> {
    let s = ctx.base;
    if s.p.rank != 2 {
        return ctx.unavailable("beta", "bundle.rank", "the Dirac current needs rank 2");
    }
    let defect = conservation(s)?;
    let conserved = defect <= CONSERVATION_TOLERANCE;
    let levels = &ctx.config.analysis.beta_levels;
    let (report, phi, psi) = beta_drift(s, levels)?;
    let mut part = Part::default();
    part.checks.push(Check::new("beta.positivity", report.positivity_margin, Relation::Above, 0.0));
    part.checks.push(Check::new("beta.hermitian", report.hermitian_defect, Relation::AtMost, ctx.tol.hermitian));
    let mut off_shell_drift = None;
    if conserved {
        part.checks.push(Check::new("beta.drift", report.hypersurface_drift, Relation::AtMost, ctx.tol.drift));
        if levels.len() > 1 {
            let off = hypersurface_independence(&phi, &frozen(partner(s), s), levels, &s.metric, &s.grid, &s.rep)?;
            part.checks.push(Check::new(
                "beta.off_shell_control",
                off.hypersurface_drift,
                Relation::AtLeast,
                ctx.tol.drift,
            ));
            off_shell_drift = Some(off.hypersurface_drift);
        }
    } else {
        part.skipped.push(Skipped {
            name: "beta.drift".into(),
            reason: format!("the operator does not conserve the Dirac current (defect {defect:.3e})"),
        });
    }
    if ctx.csv_enabled() {
        let current = dirac_current(&psi, &phi, &s.rep, CurrentIndex::T)?;
        let mut rows = Vec::new();
        for &t in levels {
            let j = s.grid.level_of(t)?;
            let tj = s.grid.ts()[j];
            for (i, &x) in s.grid.xs().iter().enumerate() {
                let (_, b) = s.metric.components(tj, x)?;
                let z = current.node(j, i)[0] * b;
                rows.push(vec![tj, x, z.re, z.im]);
            }
        }
        part.csv.push(CsvDump {
            name: "current_density.csv".into(),
            header: ["t", "x", "re", "im"].map(String::from).to_vec(),
            rows,
        });
    }
    part.beta = Some(BetaSection {
        conservation_defect: defect,
        conserved,
        report,
        off_shell_drift,
    });
    Ok(part)
}

fn isometry(ctx: &Ctx) -> Result<Part, CliError> {
    let s = ctx.base;
    let sigma_prime = CauchyLine {
        t0: ctx.config.analysis.sigma_prime,
    };
    let rt = |d: &CauchyData| compatibility_round_trip(&s.p, &s.q, &s.metric, d, sigma_prime, &s.grid, &s.opts);
    let (round_trip, r1) = rt(&s.phi0)?;
    let second = match &s.second {
        Some(d) => d.clone(),
        None => s.phi0.combine(c(0.0, 0.0), &s.phi0, c(0.0, 1.0), &s.grid)?,
    };
    let (a, b) = (c(0.7, -0.2), c(-1.3, 0.4));
    let mixed = s.phi0.combine(a, &second, b, &s.grid)?;
    let (_, r2) = rt(&second)?;
    let (_, rm) = rt(&mixed)?;
    let scale = rm.sup_norm();
    let gap = rm
        .values
        .iter()
        .zip(r1.values.iter().zip(&r2.values))
        .map(|(m, (x, y))| (m - (a * x + b * y)).norm())
        .fold(0.0, f64::max);
    let linearity_defect = if scale > 0.0 { gap / scale } else { gap };

    let mut part = Part::default();
    part.checks.push(Check::new("round_trip.error", round_trip.relative_error, Relation::AtMost, ctx.tol.round_trip));
    part.checks.push(Check::new("round_trip.linearity", linearity_defect, Relation::AtMost, ctx.tol.linearity));
    let mut gram = None;
    if s.p.rank != 2 {
        part.skipped.push(Skipped {
            name: "isometry.gram".into(),
            reason: "the Dirac current needs rank 2".into(),
        });
    } else {
        let defect = conservation(s)?;
        if defect > CONSERVATION_TOLERANCE {
            part.skipped.push(Skipped {
                name: "isometry.gram".into(),
                reason: format!("the operator does not conserve the Dirac current (defect {defect:.3e})"),
            });
        } else {
            let mut data = vec![s.phi0.clone()];
            data.extend(s.second.clone());
            let r = data_space_isometry_check(&data, sigma_prime, &s.metric, (&s.p, &s.q), &s.grid, &s.rep, &s.opts)?;
            part.checks.push(Check::new("isometry.gram_mismatch", r.max_relative_mismatch, Relation::AtMost, ctx.tol.gram));
            part.checks.push(Check::new(
                "isometry.gram_min_eigenvalue",
                r.min_eigenvalue_sigma.min(r.min_eigenvalue_sigma_prime),
                Relation::Above,
                0.0,
            ));
            gram = Some(r);
        }
    }
    part.isometry = Some(IsometrySection {
        round_trip,
        linearity_defect,
        gram,
    });
    Ok(part)
}

/// Runs `f` on every ladder level and tabulates one column per quantity.
fn ladder<F>(ctx: &Ctx, quantities: &[String], f: F) -> Result<Vec<ConvergenceTable>, CliError>
where
    F: Fn(&Scenario) -> Result<Vec<f64>, CliError> + Sync,
{
    let nxs = &ctx.config.analysis.ladder;
    let results: Vec<Result<(f64, Vec<f64>), CliError>> = nxs
        .par_iter()
        .map(|&nx| {
            let s = Scenario::build(ctx.config, nx)?;
            Ok((s.grid.dx, f(&s)?))
        })
        .collect();
    let mut levels = Vec::with_capacity(nxs.len());
    for (&nx, r) in nxs.iter().zip(results) {
        let (dx, errs) = r?;
        levels.push((nx, dx, errs));
    }
    Ok(quantities
        .iter()
        .enumerate()
        .map(|(q, name)| {
            let rows: Vec<(usize, f64, f64)> = levels.iter().map(|(nx, dx, e)| (*nx, *dx, e[q])).collect();
            ConvergenceTable::from_errors(name, &rows)
        })
        .collect())
}

fn order_check(table: &ConvergenceTable, tol: &Tolerances) -> Check {
    let name = format!("convergence.{}.order", table.quantity);
    let finest = table.finest_error().unwrap_or(f64::NAN);
    if finest <= ROUNDOFF_FLOOR {
        return Check::new(name, finest, Relation::AtMost, ROUNDOFF_FLOOR).with_note("error at roundoff level; order not measurable");
    }
    Check::new(name, table.min_order().unwrap_or(f64::NAN), Relation::AtLeast, tol.min_order)
}

fn convergence(ctx: &Ctx, study: Study) -> Result<Part, CliError> {
    let s = ctx.base;
    let tables = match study {
        Study::Solve => ladder(ctx, &["solve.residual_l2".into()], |s| {
            Ok(vec![solve_cauchy(&s.p, &s.q, &s.metric, &s.phi0, &s.grid, &s.opts)?.1.residual_l2])
        })?,
        Study::DirectVsReduced => ladder(ctx, &["direct_vs_reduced.relative_gap".into()], |s| {
            Ok(vec![reduction_gap(s)?.relative_gap])
        })?,
        Study::RoundTrip => {
            let sigma_prime = CauchyLine {
                t0: ctx.config.analysis.sigma_prime,
            };
            ladder(ctx, &["round_trip.error".into()], |s| {
                Ok(vec![
                    compatibility_round_trip(&s.p, &s.q, &s.metric, &s.phi0, sigma_prime, &s.grid, &s.opts)?
                        .0
                        .round_trip_error,
                ])
            })?
        }
        Study::Greens => {
            if ctx.sources().is_none() {
                return ctx.unavailable("convergence-greens", "source", "[source] and [dual_source] required");
            }
            let names: Vec<String> = DIRECTIONS
                .iter()
                .flat_map(|&d| ["identity_i", "identity_ii"].map(|q| format!("greens.{}.{q}", direction_name(d))))
                .collect();
            ladder(ctx, &names, |s| {
                let mut out = Vec::new();
                for d in DIRECTIONS {
                    let (phi, psi) = (s.source.as_ref().expect("checked"), s.dual_source.as_ref().expect("checked"));
                    let s_phi = greens_apply(&s.p, &s.q, &s.metric, phi, d, &s.grid, &s.opts)?;
                    let residual = prehyp_core::bundle_ops::apply(&s.p, &s_phi, &s.grid)?;
                    out.push(interior_relative_l2(&residual, &phi.section, s));
                    out.push(identity_ii_residual(&s.p, &s.q, &s.metric, psi, d, &s.grid, &s.opts)?);
                }
                Ok(out)
            })?
        }
        Study::AdjointCheck => {
            if ctx.sources().is_none() {
                return ctx.unavailable("convergence-adjoint-check", "source", "[source] and [dual_source] required");
            }
            if s.p.has_connection() || s.q.has_connection() {
                return ctx.unavailable(
                    "convergence-adjoint-check",
                    "operator_P.omega_t",
                    "formal adjoint unavailable for operators with a connection",
                );
            }
            let names: Vec<String> = DIRECTIONS.iter().map(|&d| format!("adjoint.{}.pairing_defect", direction_name(d))).collect();
            ladder(ctx, &names, |s| Ok(pairings(s)?.iter().map(|r| r.defect).collect()))?
        }
        Study::Beta => {
            if s.p.rank != 2 {
                return ctx.unavailable("convergence-beta", "bundle.rank", "the Dirac current needs rank 2");
            }
            let defect = conservation(s)?;
            if defect > CONSERVATION_TOLERANCE {
                return ctx.unavailable(
                    "convergence-beta",
                    "operator_P",
                    &format!("the operator does not conserve the Dirac current (defect {defect:.3e})"),
                );
            }
            let levels = &ctx.config.analysis.beta_levels;
            if levels.len() < 2 {
                return ctx.unavailable("convergence-beta", "analysis.beta_levels", "drift needs at least two levels");
            }
            ladder(ctx, &["beta.drift".into()], |s| Ok(vec![beta_drift(s, levels)?.0.hypersurface_drift]))?
        }
    };
    let mut part = Part::default();
    for t in &tables {
        part.checks.push(order_check(t, ctx.tol));
        if ctx.csv_enabled() {
            part.csv.push(convergence_csv(t));
        }
    }
    part.tables = tables;
    Ok(part)
}

fn run_item(ctx: &Ctx, item: Item) -> Result<Part, CliError> {
    match item {
        Item::Pair => check_pair(ctx),
        Item::Solve => solve(ctx),
        Item::Reduction => reduction(ctx),
        Item::Greens => greens(ctx),
        Item::Adjoint => adjoint(ctx),
        Item::Beta => beta(ctx),
        Item::Isometry => isometry(ctx),
        Item::Convergence(s) => convergence(ctx, s),
    }
}

/// Runs `command` on `config`. `seed` overrides `analysis.seed`.
pub fn run(command: Command, config: &ScenarioConfig, seed: Option<u64>) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut config = config.clone();
    if let Some(seed) = seed {
        config.analysis.seed = seed;
    }
    let base = Scenario::build(&config, config.grid.nx)?;
    let ctx = Ctx {
        config: &config,
        base: &base,
        tol: &config.tolerances,
        seed: config.analysis.seed,
        strict: command != Command::VerifyAll,
    };
    let items = command.items();
    let results: Vec<(Result<Part, CliError>, f64)> = items
        .par_iter()
        .map(|&item| {
            let t = Instant::now();
            let r = run_item(&ctx, item);
            (r, t.elapsed().as_secs_f64())
        })
        .collect();

    let mut report = RunReport {
        subcommand: command.name(),
        seed: config.analysis.seed,
        pass: true,
        scenario: config.clone(),
        grid: GridSummary {
            nx: base.grid.nx,
            nt: base.grid.nt,
            dx: base.grid.dx,
            dt: base.grid.dt,
            cfl: base.grid.cfl,
        },
        checks: Vec::new(),
        skipped: Vec::new(),
        pair: None,
        solve: None,
        direct_vs_reduced: None,
        greens: None,
        adjoint: None,
        beta: None,
        isometry: None,
        convergence: Vec::new(),
    };
    let mut timings = BTreeMap::new();
    let mut csv = Vec::new();
    for (item, (part, secs)) in items.iter().zip(results) {
        let part = part?;
        timings.insert(item.name(), secs);
        report.checks.extend(part.checks);
        report.skipped.extend(part.skipped);
        report.pair = report.pair.or(part.pair);
        report.solve = report.solve.or(part.solve);
        report.direct_vs_reduced = report.direct_vs_reduced.or(part.reduction);
        report.greens = report.greens.or(part.greens);
        report.adjoint = report.adjoint.or(part.adjoint);
        report.beta = report.beta.or(part.beta);
        report.isometry = report.isometry.or(part.isometry);
        report.convergence.extend(part.tables);
        csv.extend(part.csv);
    }
    report.pass = report.checks.iter().all(|c| c.pass);
    timings.insert("total".into(), start.elapsed().as_secs_f64());
    Ok(Outcome { report, timings, csv })
}
