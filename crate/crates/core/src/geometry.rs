//! Charts, diagonal 1+1 metrics `g = α² dt² − β² dx²`, constant-time
//! Cauchy lines and causal shadows.
//!
//! With a diagonal metric every constant-`t` line is spacelike and Cauchy,
//! and null curves solve `dx/dt = ±α/β`. Causal futures and pasts of
//! intervals are therefore intervals whose endpoints follow those curves.

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Line,
    Circle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart1p1 {
    pub t_min: f64,
    pub t_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub topology: Topology,
}

const SLACK: f64 = 1e-9;

impl Chart1p1 {
    pub fn new(t_range: (f64, f64), x_range: (f64, f64), topology: Topology) -> Result<Chart1p1> {
        let (t_min, t_max) = t_range;
        let (x_min, x_max) = x_range;
        if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
            return Err(Error::InvalidChart(format!("time range [{t_min}, {t_max}]")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidChart(format!("space range [{x_min}, {x_max}]")));
        }
        Ok(Chart1p1 {
            t_min,
            t_max,
            x_min,
            x_max,
            topology,
        })
    }

    pub fn period(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Maps `x` into `[x_min, x_max)` on a circle; identity on a line.
    pub fn wrap(&self, x: f64) -> f64 {
        match self.topology {
            Topology::Line => x,
            Topology::Circle => self.x_min + (x - self.x_min).rem_euclid(self.period()),
        }
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        let span = (self.t_max - self.t_min).max(self.period());
        let eps = SLACK * span;
        let t_ok = t >= self.t_min - eps && t <= self.t_max + eps;
        match self.topology {
            Topology::Line => t_ok && x >= self.x_min - eps && x <= self.x_max + eps,
            Topology::Circle => t_ok && x.is_finite(),
        }
    }

    fn check(&self, t: f64, x: f64) -> Result<()> {
        if self.contains(t, x) {
            Ok(())
        } else {
            Err(Error::OutsideChart { t, x })
        }
    }
}

/// `g = α(t,x)² dt² − β(t,x)² dx²`, signature (+,−).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMetric {
    pub chart: Chart1p1,
    pub alpha: Expr,
    pub beta: Expr,
}

impl DiagonalMetric {
    pub fn new(chart: Chart1p1, alpha: Expr, beta: Expr) -> DiagonalMetric {
        DiagonalMetric { chart, alpha, beta }
    }

    pub fn minkowski(chart: Chart1p1) -> DiagonalMetric {
        DiagonalMetric::new(chart, Expr::constant(1.0), Expr::constant(1.0))
    }

    pub fn is_static(&self) -> bool {
        !self.alpha.depends_on_t() && !self.beta.depends_on_t()
    }

    pub fn is_constant(&self) -> bool {
        self.is_static() && !self.alpha.depends_on_x() && !self.beta.depends_on_x()
    }

    /// `(α, β)` at a chart point, checked positive.
    pub fn components(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        self.chart.check(t, x)?;
        self.components_unchecked(t, x)
    }

    pub(crate) fn components_unchecked(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let x = self.chart.wrap(x);
        let a = self.alpha.eval(t, x)?;
        let b = self.beta.eval(t, x)?;
        if a <= 0.0 {
            return Err(Error::NonPositiveMetric { component: "alpha", t, x });
        }
        if b <= 0.0 {
            return Err(Error::NonPositiveMetric { component: "beta", t, x });
        }
        Ok((a, b))
    }

    /// Coordinate light speed `α/β`.
    pub fn light_speed(&self, t: f64, x: f64) -> Result<f64> {
        let (a, b) = self.components_unchecked(t, x)?;
        Ok(a / b)
    }

    /// Spacetime volume density `αβ`.
    pub fn volume_density(&self, t: f64, x: f64) -> Result<f64> {
        let (a, b) = self.components(t, x)?;
        Ok(a * b)
    }

    /// Checks positivity at the given sample points.
    pub fn validate_on(&self, points: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
        for (t, x) in points {
            self.components_unchecked(t, x)?;
        }
        Ok(())
    }
}

/// `g(ξ, ξ) = ξ_t²/α² − ξ_x²/β²` for a covector `ξ = (ξ_t, ξ_x)`.
pub fn inverse_metric_on_covector(metric: &DiagonalMetric, point: (f64, f64), xi: (f64, f64)) -> Result<f64> {
    let (a, b) = metric.components(point.0, point.1)?;
    Ok(xi.0 * xi.0 / (a * a) - xi.1 * xi.1 / (b * b))
}

/// The hypersurface `{t = t0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyLine {
    pub t0: f64,
}

impl CauchyLine {
    pub fn new(chart: &Chart1p1, t0: f64) -> Result<CauchyLine> {
        if t0 < chart.t_min - SLACK || t0 > chart.t_max + SLACK {
            return Err(Error::OutsideChart { t: t0, x: chart.x_min });
        }
        Ok(CauchyLine { t0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitNormal {
    /// Future-directed unit normal vector `(nᵗ, nˣ)`.
    pub vector: (f64, f64),
    /// Index-lowered covector `g(n, ·)`.
    pub covector: (f64, f64),
}

pub fn unit_normal(metric: &DiagonalMetric, sigma: CauchyLine, x: f64) -> Result<UnitNormal> {
    let (a, _) = metric.components(sigma.t0, x)?;
    Ok(UnitNormal {
        vector: (1.0 / a, 0.0),
        covector: (a, 0.0),
    })
}

/// Induced line density `dμ_Σ = β(t0, x) dx`.
pub fn hypersurface_measure(metric: &DiagonalMetric, sigma: CauchyLine, x: f64) -> Result<f64> {
    Ok(metric.components(sigma.t0, x)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Sorts and merges overlapping or touching intervals.
pub fn normalize(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Future,
    Past,
    Both,
}

/// Per time level, a sorted disjoint union of closed x-intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalShadow {
    pub times: Vec<f64>,
    pub levels: Vec<Vec<Interval>>,
    pub truncated: bool,
    chart: Chart1p1,
}

impl CausalShadow {
    pub fn at(&self, level: usize) -> &[Interval] {
        &self.levels[level]
    }

    /// Whether `x` lies within `inflate` of the shadow at `level`.
    pub fn contains(&self, level: usize, x: f64, inflate: f64) -> bool {
        let hit = |x: f64| {
            self.levels[level]
                .iter()
                .any(|iv| x >= iv.lo - inflate && x <= iv.hi + inflate)
        };
        match self.chart.topology {
            Topology::Line => hit(x),
            Topology::Circle => {
                let p = self.chart.period();
                let w = self.chart.wrap(x);
                hit(w) || hit(w - p) || hit(w + p)
            }
        }
    }

    pub fn chart(&self) -> &Chart1p1 {
        &self.chart
    }
}

/// An interval tracked through time with unwrapped endpoints.
#[derive(Debug, Clone, Copy)]
struct Front {
    left: f64,
    right: f64,
}

struct Propagator<'a> {
    metric: &'a DiagonalMetric,
    max_step: f64,
    truncated: bool,
}

impl Propagator<'_> {
    fn clamp(&mut self, x: f64) -> f64 {
        let chart = &self.metric.chart;
        if chart.topology == Topology::Circle {
            return x;
        }
        if x < chart.x_min {
            self.truncated = true;
            chart.x_min
        } else if x > chart.x_max {
            self.truncated = true;
            chart.x_max
        } else {
            x
        }
    }

    fn speed(&self, t: f64, x: f64) -> Result<f64> {
        let chart = &self.metric.chart;
        let x = match chart.topology {
            Topology::Line => x.clamp(chart.x_min, chart.x_max),
            Topology::Circle => x,
        };
        self.metric.light_speed(t, x)
    }

    /// Classical RK4 for `dx/dt = sign · c(t, x)` from `t_from` to `t_to`.
    fn endpoint(&mut self, x0: f64, sign: f64, t_from: f64, t_to: f64) -> Result<f64> {
        let span = t_to - t_from;
        if span == 0.0 {
            return Ok(x0);
        }
        let n = (span.abs() / self.max_step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        // the shadow grows in |t - t0| whichever way time runs
        let s = sign;
        let mut x = x0;
        let mut t = t_from;
        for _ in 0..n {
            let k1 = s * self.speed(t, x)?;
            let k2 = s * self.speed(t + 0.5 * h, x + 0.5 * h.abs() * k1)?;
            let k3 = s * self.speed(t + 0.5 * h, x + 0.5 * h.abs() * k2)?;
            let k4 = s * self.speed(t + h, x + h.abs() * k3)?;
            x += h.abs() / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            x = self.clamp(x);
            t += h;
        }
        Ok(x)
    }

    fn advance(&mut self, fronts: &mut [Front], t_from: f64, t_to: f64) -> Result<()> {
        for f in fronts.iter_mut() {
            f.left = self.endpoint(f.left, -1.0, t_from, t_to)?;
            f.right = self.endpoint(f.right, 1.0, t_from, t_to)?;
        }
        Ok(())
    }

    fn snapshot(&self, fronts: &[Front]) -> Vec<Interval> {
        let chart = &self.metric.chart;
        let mut out = Vec::new();
        for f in fronts {
            match chart.topology {
                Topology::Line => out.push(Interval::new(f.left, f.right)),
                Topology::Circle => {
                    let p = chart.period();
                    if f.right - f.left >= p {
                        return vec![Interval::new(chart.x_min, chart.x_max)];
                    }
                    let lo = chart.wrap(f.left);
                    let hi = lo + (f.right - f.left);
                    if hi <= chart.x_max {
                        out.push(Interval::new(lo, hi));
                    } else {
                        out.push(Interval::new(lo, chart.x_max));
                        out.push(Interval::new(chart.x_min, hi - p));
                    }
                }
            }
        }
        normalize(out)
    }
}

/// Causal shadow of `seed ⊂ {t = t0}` evaluated at each of `times`.
///
/// Times at or after `t0` get the future shadow and earlier times the past
/// shadow for [`Direction::Both`]; a one-sided direction yields an empty
/// level on the other side.
pub fn shadow_at_times(
    metric: &DiagonalMetric,
    seed: &[Interval],
    t0: f64,
    direction: Direction,
    times: &[f64],
    max_step: f64,
) -> Result<CausalShadow> {
    if !(max_step > 0.0) {
        return Err(Error::InvalidData("characteristic step must be positive".into()));
    }
    let chart = &metric.chart;
    for iv in seed {
        chart.check(t0, iv.lo)?;
        chart.check(t0, iv.hi)?;
    }
    let mut prop = Propagator {
        metric,
        max_step,
        truncated: false,
    };
    let mut levels = vec![Vec::new(); times.len()];
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let seed_fronts: Vec<Front> = seed
        .iter()
        .map(|iv| Front {
            left: iv.lo,
            right: iv.hi,
        })
        .collect();

    let future = matches!(direction, Direction::Future | Direction::Both);
    let past = matches!(direction, Direction::Past | Direction::Both);

    if future {
        let mut fronts = seed_fronts.clone();
        let mut t_now = t0;
        for &i in order.iter().filter(|&&i| times[i] >= t0) {
            prop.advance(&mut fronts, t_now, times[i])?;
            t_now = times[i];
            levels[i] = prop.snapshot(&fronts);
        }
    }
    if past {
        let mut fronts = seed_fronts;
        let mut t_now = t0;
        for &i in order.iter().rev().filter(|&&i| times[i] <= t0) {
            prop.advance(&mut fronts, t_now, times[i])?;
            t_now = times[i];
            levels[i] = prop.snapshot(&fronts);
        }
    }
    Ok(CausalShadow {
        times: times.to_vec(),
        levels,
        truncated: prop.truncated,
        chart: chart.clone(),
    })
}

/// Causal shadow from `t0` to `t_target` at uniform steps no larger than
/// `max_step`. [`Direction::Both`] picks the side containing `t_target`.
pub fn causal_shadow(
    metric: &DiagonalMetric,
    seed: &[Interval],
    t0: f64,
    direction: Direction,
    t_target: f64,
    max_step: f64,
) -> Result<CausalShadow> {
    metric.chart.check(t_target, metric.chart.x_min)?;
    let span = t_target - t0;
    let n = (span.abs() / max_step).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=n).map(|i| t0 + span * i as f64 / n as f64).collect();
    shadow_at_times(metric, seed, t0, direction, &times, max_step)
}
