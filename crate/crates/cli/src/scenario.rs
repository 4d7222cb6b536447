//! Core objects assembled from a validated configuration at one resolution.

use num_complex::Complex64;
use prehyp_core::bundle_ops::FirstOrderOperator;
use prehyp_core::cauchy::{check_causal_margin, support_shadow, CauchyData, Window, CAUSAL_MARGIN_NODES};
use prehyp_core::geometry::Direction;
use prehyp_core::greens::{GreenDirection, TestSection};
use prehyp_core::qft_dirac::CliffordRep;
use prehyp_core::{CauchyLine, Chart1p1, DiagonalMetric, Expr, Grid1p1, MatrixField, SolveOptions, Topology};

use crate::config::{CoefficientArrays, DataConfig, OperatorConfig, ScenarioConfig, SourceConfig, TopologyName, WindowConfig};
use crate::error::CliError;

pub struct Scenario {
    pub metric: DiagonalMetric,
    pub grid: Grid1p1,
    pub p: FirstOrderOperator,
    pub q: FirstOrderOperator,
    pub phi0: CauchyData,
    pub second: Option<CauchyData>,
    pub source: Option<TestSection>,
    pub dual_source: Option<TestSection>,
    pub opts: SolveOptions,
    pub rep: CliffordRep,
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        key: key.into(),
        message: message.into(),
    }
}

fn expr(key: &str, source: &str) -> Result<Expr, CliError> {
    Expr::parse(source).map_err(|e| invalid(key, format!("'{source}': {e}")))
}

fn field(key: &str, rank: usize, arrays: &CoefficientArrays) -> Result<MatrixField, CliError> {
    let re = arrays
        .re
        .iter()
        .map(|s| expr(key, s))
        .collect::<Result<Vec<_>, _>>()?;
    let im = match &arrays.im {
        Some(v) => v.iter().map(|s| expr(&format!("{key}_im"), s).map(Some)).collect::<Result<Vec<_>, _>>()?,
        None => vec![None; rank * rank],
    };
    Ok(MatrixField::from_exprs(rank, re, im))
}

fn operator(name: &str, rank: usize, c: &OperatorConfig) -> Result<FirstOrderOperator, CliError> {
    let key = |k: &str| format!("{name}.{k}");
    let op = FirstOrderOperator::new(
        field(&key("A_t"), rank, &c.a_t)?,
        field(&key("A_x"), rank, &c.a_x)?,
        field(&key("B"), rank, &c.b)?,
    )?;
    if c.omega_t.is_none() && c.omega_x.is_none() {
        return Ok(op);
    }
    let conn = |k: &str, a: &Option<CoefficientArrays>| match a {
        Some(a) => field(&key(k), rank, a),
        None => Ok(MatrixField::zero(rank)),
    };
    Ok(op.with_connection(conn("omega_t", &c.omega_t)?, conn("omega_x", &c.omega_x)?)?)
}

fn window(key: &str, w: &WindowConfig) -> Result<Window, CliError> {
    Window::new(w.center, w.halfwidth, w.steepness).map_err(|e| invalid(key, e.to_string()))
}

fn component_exprs(key: &str, re: &[String], im: &Option<Vec<String>>) -> Result<(Vec<Expr>, Vec<Option<Expr>>), CliError> {
    let re = re.iter().map(|s| expr(&format!("{key}.components"), s)).collect::<Result<Vec<_>, _>>()?;
    let im = match im {
        Some(v) => v
            .iter()
            .map(|s| expr(&format!("{key}.components_im"), s).map(Some))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![None; re.len()],
    };
    Ok((re, im))
}

fn margin_violation(key: &str, e: prehyp_core::Error) -> CliError {
    match e {
        prehyp_core::Error::CausalMargin(m) => invalid(key, format!("causal margin violated: {m}")),
        other => other.into(),
    }
}

fn cauchy_data(key: &str, d: &DataConfig, chart: &Chart1p1, metric: &DiagonalMetric, grid: &Grid1p1) -> Result<CauchyData, CliError> {
    let sigma = CauchyLine::new(chart, d.t0).map_err(|e| invalid(&format!("{key}.t0"), e.to_string()))?;
    let (re, im) = component_exprs(key, &d.components, &d.components_im)?;
    let wkey = format!("{key}.window");
    let w = window(&wkey, &d.window)?;
    w.check_resolved(grid.dx).map_err(|e| invalid(&wkey, e.to_string()))?;
    // the nominal window must sit inside the chart before its tails are sampled
    if grid.chart.topology == Topology::Line {
        let margin = CAUSAL_MARGIN_NODES as f64 * grid.dx;
        if d.window.center - d.window.halfwidth < chart.x_min + margin || d.window.center + d.window.halfwidth > chart.x_max - margin {
            return Err(invalid(&wkey, "causal margin violated: window reaches the spatial boundary"));
        }
    }
    let data = CauchyData::from_exprs(grid, sigma, &re, &im, &w)?;
    if !data.support.is_empty() {
        let shadow = support_shadow(metric, grid, &data.support, data.t0, Direction::Both).map_err(|e| margin_violation(&wkey, e))?;
        check_causal_margin(&shadow, grid).map_err(|e| margin_violation(&wkey, e))?;
    }
    Ok(data)
}

fn test_section(key: &str, s: &SourceConfig, rank: usize, metric: &DiagonalMetric, grid: &Grid1p1) -> Result<TestSection, CliError> {
    let (re, im) = component_exprs(key, &s.components, &s.components_im)?;
    let wx = window(&format!("{key}.window"), &s.window)?;
    let wt = window(&format!("{key}.t_window"), &s.t_window)?;
    let section = TestSection::from_fn(grid, rank, |t, x| {
        let w = wx.eval(x) * wt.eval(t);
        let mut out = Vec::with_capacity(rank);
        for (r, i) in re.iter().zip(&im) {
            let v = match i {
                Some(e) => Complex64::new(r.eval(t, x)?, e.eval(t, x)?),
                None => Complex64::from(r.eval(t, x)?),
            };
            out.push(v * w);
        }
        Ok(out)
    })?;
    if let Some((a, b)) = section.levels {
        if a < CAUSAL_MARGIN_NODES || b + CAUSAL_MARGIN_NODES >= grid.nt {
            return Err(invalid(
                &format!("{key}.t_window"),
                format!("causal margin violated: source occupies levels {a}..={b} of {}", grid.nt),
            ));
        }
    }
    for dir in [GreenDirection::Retarded, GreenDirection::Advanced] {
        if let Some(shadow) = section.shadow(metric, grid, dir).map_err(|e| margin_violation(key, e))? {
            check_causal_margin(&shadow, grid).map_err(|e| margin_violation(&format!("{key}.window"), e))?;
        }
    }
    Ok(section)
}

impl Scenario {
    /// Builds every object of `config` on a grid with `nx` nodes.
    pub fn build(config: &ScenarioConfig, nx: usize) -> Result<Scenario, CliError> {
        let st = &config.spacetime;
        let [t_min, t_max] = config.grid.t_span.unwrap_or(st.t_range);
        if t_min < st.t_range[0] || t_max > st.t_range[1] {
            return Err(invalid("grid.t_span", "t_span must lie within spacetime.t_range"));
        }
        let topology = match st.topology {
            TopologyName::Line => Topology::Line,
            TopologyName::Circle => Topology::Circle,
        };
        let chart = Chart1p1::new((t_min, t_max), (st.x_range[0], st.x_range[1]), topology)
            .map_err(|e| invalid("spacetime", e.to_string()))?;
        let metric = DiagonalMetric::new(chart.clone(), expr("spacetime.alpha", &st.alpha)?, expr("spacetime.beta", &st.beta)?);
        let grid = Grid1p1::new(&metric, nx, config.grid.cfl).map_err(|e| match e {
            prehyp_core::Error::Cfl(m) => invalid("grid.cfl", m),
            prehyp_core::Error::NonPositiveMetric { component, t, x } => {
                invalid(&format!("spacetime.{component}"), format!("must be positive, found a nonpositive value at (t={t}, x={x})"))
            }
            other => other.into(),
        })?;
        metric
            .validate_on(grid.ts().iter().step_by(8).flat_map(|&t| grid.xs().iter().map(move |&x| (t, x))))
            .map_err(|e| match e {
                prehyp_core::Error::NonPositiveMetric { component, t, x } => {
                    invalid(&format!("spacetime.{component}"), format!("must be positive, found a nonpositive value at (t={t}, x={x})"))
                }
                other => other.into(),
            })?;
        let rank = config.rank;
        let p = operator("operator_P", rank, &config.operator_p)?;
        let q = operator("operator_Q", rank, &config.operator_q)?;
        let phi0 = cauchy_data("initial_data", &config.initial_data, &chart, &metric, &grid)?;
        let second = config
            .second_data
            .as_ref()
            .map(|d| cauchy_data("second_data", d, &chart, &metric, &grid))
            .transpose()?;
        let source = config
            .source
            .as_ref()
            .map(|s| test_section("source", s, rank, &metric, &grid))
            .transpose()?;
        let dual_source = config
            .dual_source
            .as_ref()
            .map(|s| test_section("dual_source", s, rank, &metric, &grid))
            .transpose()?;
        Ok(Scenario {
            metric,
            grid,
            p,
            q,
            phi0,
            second,
            source,
            dual_source,
            opts: SolveOptions {
                dissipation: config.dissipation,
            },
            rep: CliffordRep::default(),
        })
    }
}
