//! Report schema and writers. `report.json` holds only deterministic
//! quantities; wall-clock timings go to `timings.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use prehyp_core::bundle_ops::PairReport;
use prehyp_core::cauchy::{RoundTripReport, SolveReport};
use prehyp_core::convergence::ConvergenceTable;
use prehyp_core::greens::{GreenDirection, PairingReport};
use prehyp_core::qft_dirac::{HermitianReport, IsometryReport};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
}

impl Relation {
    fn holds(self, value: f64, limit: f64) -> bool {
        match self {
            Relation::AtMost => value <= limit,
            Relation::AtLeast => value >= limit,
            Relation::Above => value > limit,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Above => ">",
        }
    }
}

/// One tolerance comparison. `value` is `None` when the measured quantity
/// was not finite, which always fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub relation: Relation,
    pub limit: f64,
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, limit: f64) -> Check {
        let finite = value.is_finite();
        Check {
            name: name.into(),
            pass: finite && relation.holds(value, limit),
            value: finite.then_some(value),
            relation,
            limit,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Check {
        self.note = Some(note.into());
        self
    }

    pub fn line(&self) -> String {
        let value = self.value.map_or_else(|| "non-finite".to_string(), |v| format!("{v:.3e}"));
        let mut s = format!(
            "{} {}: {value} {} {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.relation.symbol(),
            self.limit
        );
        if let Some(n) = &self.note {
            let _ = write!(s, " ({n})");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skipped {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSummary {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub cfl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolProbe {
    pub seed: u64,
    pub samples: usize,
    pub all_invertible: bool,
    /// `min (|det σ_P(ξ)| − |g(ξ,ξ)|^{k/2})` over the samples.
    pub min_determinant_margin: f64,
    /// `max ||det σ_P det σ_Q| − |g|^k| / |g|^k`.
    pub max_product_defect: f64,
    /// Whether `σ_Q = σ_P` at every sample, which makes the margin bound exact.
    pub symmetric_symbols: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub report: PairReport,
    pub probe: SymbolProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSection {
    pub relative_gap: f64,
    pub absolute_gap: f64,
    pub direct_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreensSection {
    pub direction: GreenDirection,
    pub identity_i_residual: f64,
    pub identity_ii_residual: f64,
    pub support_leak: f64,
    /// Absent for operators with a connection, whose formal adjoint is not
    /// available.
    pub pairing: Option<PairingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    pub conservation_defect: f64,
    pub conserved: bool,
    pub report: HermitianReport,
    /// Drift with the second field replaced by its frozen initial data.
    pub off_shell_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsometrySection {
    pub round_trip: RoundTripReport,
    pub linearity_defect: f64,
    pub gram: Option<IsometryReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub subcommand: String,
    pub seed: u64,
    pub pass: bool,
    pub scenario: ScenarioConfig,
    pub grid: GridSummary,
    pub checks: Vec<Check>,
    pub skipped: Vec<Skipped>,
    pub pair: Option<PairSection>,
    pub solve: Option<SolveReport>,
    pub direct_vs_reduced: Option<ReductionSection>,
    pub greens: Option<Vec<GreensSection>>,
    pub adjoint: Option<Vec<PairingReport>>,
    pub beta: Option<BetaSection>,
    pub isometry: Option<IsometrySection>,
    pub convergence: Vec<ConvergenceTable>,
}

/// A CSV file: header plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDump {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvDump {
    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn convergence_csv(table: &ConvergenceTable) -> CsvDump {
    CsvDump {
        name: format!("convergence_{}.csv", table.quantity.replace(['.', ' ', '/'], "_")),
        header: ["nx", "dx", "error", "order"].map(String::from).to_vec(),
        rows: table
            .rows
            .iter()
            .map(|r| vec![r.nx as f64, r.dx, r.error, r.order.unwrap_or(f64::NAN)])
            .collect(),
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn to_json(report: &RunReport) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `report.json`, `timings.json` and the CSV dumps into `dir`.
pub fn write_outputs(
    dir: &Path,
    report: &RunReport,
    timings: &BTreeMap<String, f64>,
    csv: &[CsvDump],
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join("report.json");
    std::fs::write(&path, to_json(report)?).map_err(|e| io(&path, e))?;
    let path = dir.join("timings.json");
    let mut t = serde_json::to_string_pretty(timings).map_err(|e| CliError::Internal(e.to_string()))?;
    t.push('\n');
    std::fs::write(&path, t).map_err(|e| io(&path, e))?;
    for dump in csv {
        let path = dir.join(&dump.name);
        std::fs::write(&path, dump.render()).map_err(|e| io(&path, e))?;
    }
    Ok(())
}
