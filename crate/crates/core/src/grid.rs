//! Uniform space-time grids and sampled bundle sections.

use num_complex::Complex64;

use crate::geometry::{Chart1p1, DiagonalMetric, Topology};
use crate::linalg::ZERO;
use crate::{Error, Result};

/// Courant numbers above this are rejected by the solvers.
pub const MAX_STABLE_CFL: f64 = 1.0;

pub const DEFAULT_CFL: f64 = 0.5;

/// Smallest node count the 5-point dissipation stencil fits in.
pub const MIN_NODES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1p1 {
    pub chart: Chart1p1,
    pub nx: usize,
    pub dx: f64,
    /// Number of time levels (steps + 1).
    pub nt: usize,
    pub dt: f64,
    /// Courant number `c_max · dt / dx` actually realized.
    pub cfl: f64,
    pub c_max: f64,
    xs: Vec<f64>,
    ts: Vec<f64>,
}

impl Grid1p1 {
    /// A grid with `nx` nodes and the largest time step satisfying
    /// `dt ≤ cfl · dx / c_max`; the step count is rounded up to a multiple of 4
    /// so quarter-span times fall on levels.
    pub fn new(metric: &DiagonalMetric, nx: usize, cfl: f64) -> Result<Grid1p1> {
        if !(cfl > 0.0 && cfl <= MAX_STABLE_CFL) {
            return Err(Error::Cfl(format!("requested cfl {cfl} outside (0, {MAX_STABLE_CFL}]")));
        }
        let (dx, xs) = space_nodes(&metric.chart, nx)?;
        let c_max = max_light_speed(metric, &xs)?;
        let span = metric.chart.t_max - metric.chart.t_min;
        let target = cfl * dx / c_max;
        let mut steps = (span / target).ceil() as usize;
        steps = steps.div_ceil(4).max(1) * 4;
        Grid1p1::assemble(metric.chart.clone(), nx, dx, xs, steps, c_max)
    }

    /// A grid with a prescribed number of time steps.
    pub fn with_steps(metric: &DiagonalMetric, nx: usize, steps: usize) -> Result<Grid1p1> {
        let (dx, xs) = space_nodes(&metric.chart, nx)?;
        let c_max = max_light_speed(metric, &xs)?;
        Grid1p1::assemble(metric.chart.clone(), nx, dx, xs, steps, c_max)
    }

    fn assemble(chart: Chart1p1, nx: usize, dx: f64, xs: Vec<f64>, steps: usize, c_max: f64) -> Result<Grid1p1> {
        if steps < 2 {
            return Err(Error::GridTooSmall(format!("{steps} time steps")));
        }
        let span = chart.t_max - chart.t_min;
        let dt = span / steps as f64;
        let ts = (0..=steps).map(|j| chart.t_min + span * j as f64 / steps as f64).collect();
        Ok(Grid1p1 {
            chart,
            nx,
            dx,
            nt: steps + 1,
            dt,
            cfl: c_max * dt / dx,
            c_max,
            xs,
            ts,
        })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn is_periodic(&self) -> bool {
        self.chart.topology == Topology::Circle
    }

    /// Index of the time level nearest to `t`.
    pub fn level_of(&self, t: f64) -> Result<usize> {
        let pos = (t - self.chart.t_min) / self.dt;
        let idx = pos.round();
        if idx < -1e-9 || idx > (self.nt - 1) as f64 + 1e-9 || !pos.is_finite() {
            return Err(Error::OutsideChart { t, x: self.chart.x_min });
        }
        Ok(idx as usize)
    }

    pub fn check_cfl(&self) -> Result<()> {
        if self.cfl > MAX_STABLE_CFL {
            Err(Error::Cfl(format!(
                "courant number {:.3} exceeds {MAX_STABLE_CFL}",
                self.cfl
            )))
        } else {
            Ok(())
        }
    }

    /// Trapezoidal weight of node `i` along x.
    pub fn x_weight(&self, i: usize) -> f64 {
        if !self.is_periodic() && (i == 0 || i + 1 == self.nx) {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Trapezoidal weight of level `j` along t.
    pub fn t_weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.nt {
            0.5 * self.dt
        } else {
            self.dt
        }
    }
}

fn space_nodes(chart: &Chart1p1, nx: usize) -> Result<(f64, Vec<f64>)> {
    if nx < MIN_NODES {
        return Err(Error::GridTooSmall(format!("{nx} nodes, need at least {MIN_NODES}")));
    }
    let len = chart.period();
    let dx = match chart.topology {
        Topology::Line => len / (nx - 1) as f64,
        Topology::Circle => len / nx as f64,
    };
    let xs = (0..nx).map(|i| chart.x_min + dx * i as f64).collect();
    Ok((dx, xs))
}

fn max_light_speed(metric: &DiagonalMetric, xs: &[f64]) -> Result<f64> {
    let chart = &metric.chart;
    let samples = if metric.is_static() { 1 } else { 64 };
    let mut c_max: f64 = 0.0;
    for s in 0..=samples {
        let t = chart.t_min + (chart.t_max - chart.t_min) * s as f64 / samples as f64;
        for &x in xs {
            c_max = c_max.max(metric.light_speed(t, x)?);
        }
    }
    Ok(c_max)
}

/// A complex `rank`-vector per (time level, node); layout `[level][node][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub nt: usize,
    pub nx: usize,
    pub rank: usize,
    pub data: Vec<Complex64>,
}

impl GridSection {
    pub fn zeros(grid: &Grid1p1, rank: usize) -> GridSection {
        GridSection {
            nt: grid.nt,
            nx: grid.nx,
            rank,
            data: vec![ZERO; grid.nt * grid.nx * rank],
        }
    }

    /// Samples `f(t, x) -> [component; rank]` at every node.
    pub fn from_fn<F>(grid: &Grid1p1, rank: usize, mut f: F) -> Result<GridSection>
    where
        F: FnMut(f64, f64) -> Result<Vec<Complex64>>,
    {
        let mut s = GridSection::zeros(grid, rank);
        for (j, &t) in grid.ts().iter().enumerate() {
            for (i, &x) in grid.xs().iter().enumerate() {
                let v = f(t, x)?;
                if v.len() != rank {
                    return Err(Error::RankMismatch(v.len(), rank));
                }
                s.node_mut(j, i).copy_from_slice(&v);
            }
        }
        Ok(s)
    }

    pub fn level_len(&self) -> usize {
        self.nx * self.rank
    }

    pub fn level(&self, j: usize) -> &[Complex64] {
        let n = self.level_len();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn level_mut(&mut self, j: usize) -> &mut [Complex64] {
        let n = self.level_len();
        &mut self.data[j * n..(j + 1) * n]
    }

    pub fn node(&self, j: usize, i: usize) -> &[Complex64] {
        let k = self.rank;
        let start = (j * self.nx + i) * k;
        &self.data[start..start + k]
    }

    pub fn node_mut(&mut self, j: usize, i: usize) -> &mut [Complex64] {
        let k = self.rank;
        let start = (j * self.nx + i) * k;
        &mut self.data[start..start + k]
    }

    pub fn check_on(&self, grid: &Grid1p1) -> Result<()> {
        if self.nt != grid.nt || self.nx != grid.nx {
            return Err(Error::GridMismatch(format!(
                "section is {}x{}, grid is {}x{}",
                self.nt, self.nx, grid.nt, grid.nx
            )));
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &GridSection) -> Result<()> {
        if self.nt != other.nt || self.nx != other.nx {
            return Err(Error::GridMismatch(format!(
                "sections are {}x{} and {}x{}",
                self.nt, self.nx, other.nt, other.nx
            )));
        }
        if self.rank != other.rank {
            return Err(Error::RankMismatch(self.rank, other.rank));
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Discrete L² norm `sqrt(Σ |Φ|² dx dt)` over the grid.
    pub fn l2_norm(&self, grid: &Grid1p1) -> f64 {
        let mut s = 0.0;
        for z in &self.data {
            s += z.norm_sqr();
        }
        (s * grid.dx * grid.dt).sqrt()
    }

    pub fn sub(&self, other: &GridSection) -> Result<GridSection> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(GridSection { data, ..*self })
    }

    pub fn scaled(&self, s: Complex64) -> GridSection {
        GridSection {
            data: self.data.iter().map(|z| z * s).collect(),
            ..*self
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &GridSection, b: Complex64) -> Result<GridSection> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(GridSection { data, ..*self })
    }

    pub fn max_abs_diff(&self, other: &GridSection) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}
