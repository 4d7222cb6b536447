//! Named operator pairs, resolved into explicit coefficient strings against
//! the configured metric.

use prehyp_core::qft_dirac::CliffordRep;
use prehyp_core::Expr;
use serde::{Deserialize, Serialize};

use crate::config::{CoefficientArrays, OperatorConfig, SpacetimeConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `(D + m, D − m)` in the orthonormal frame of the metric.
    DiracMassive,
    DiracMassless,
    /// `(α⁻¹∂_t + β⁻¹∂_x, α⁻¹∂_t − β⁻¹∂_x)` on a line bundle.
    ScalarTransportPair,
    /// `(D + im, D − im)`, whose compositions are `□ + m²`.
    KleinGordonFactorized,
}

impl Preset {
    pub const NAMES: [&'static str; 4] = ["dirac_massive", "dirac_massless", "scalar_transport_pair", "klein_gordon_factorized"];

    pub fn from_name(name: &str) -> Option<Preset> {
        Some(match name {
            "dirac_massive" => Preset::DiracMassive,
            "dirac_massless" => Preset::DiracMassless,
            "scalar_transport_pair" => Preset::ScalarTransportPair,
            "klein_gordon_factorized" => Preset::KleinGordonFactorized,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::DiracMassive => Preset::NAMES[0],
            Preset::DiracMassless => Preset::NAMES[1],
            Preset::ScalarTransportPair => Preset::NAMES[2],
            Preset::KleinGordonFactorized => Preset::NAMES[3],
        }
    }

    pub fn rank(self) -> usize {
        match self {
            Preset::ScalarTransportPair => 1,
            _ => 2,
        }
    }

    fn takes_mass(self) -> bool {
        matches!(self, Preset::DiracMassive | Preset::KleinGordonFactorized)
    }
}

/// `s / f` as an expression string; constant `f` is folded.
fn over(s: f64, f: &str, key: &str) -> Result<String, CliError> {
    if s == 0.0 {
        return Ok("0".into());
    }
    let e = Expr::parse(f).map_err(|err| CliError::Validation {
        key: key.into(),
        message: err.to_string(),
    })?;
    if !e.depends_on_t() && !e.depends_on_x() {
        let v = e.eval(0.0, 0.0).map_err(|err| CliError::Validation {
            key: key.into(),
            message: err.to_string(),
        })?;
        return Ok(format!("{:?}", s / v));
    }
    Ok(match s {
        1.0 => format!("1/({f})"),
        -1.0 => format!("-1/({f})"),
        _ => format!("{s:?}/({f})"),
    })
}

fn frame(gamma: &prehyp_core::linalg::CMatrix, f: &str, key: &str) -> Result<CoefficientArrays, CliError> {
    let mut re = Vec::with_capacity(4);
    for i in 0..2 {
        for j in 0..2 {
            re.push(over(gamma[(i, j)].re, f, key)?);
        }
    }
    Ok(CoefficientArrays { re, im: None })
}

fn diagonal(rank: usize, v: f64) -> Vec<String> {
    (0..rank * rank)
        .map(|n| if n % (rank + 1) == 0 && v != 0.0 { format!("{v:?}") } else { "0".into() })
        .collect()
}

fn zeros(rank: usize) -> CoefficientArrays {
    CoefficientArrays {
        re: vec!["0".into(); rank * rank],
        im: None,
    }
}

/// Explicit `(P, Q)` coefficients for `preset`.
pub fn resolve(
    preset: Preset,
    mass: Option<f64>,
    spacetime: &SpacetimeConfig,
    rank: usize,
) -> Result<(OperatorConfig, OperatorConfig), CliError> {
    if rank != preset.rank() {
        return Err(CliError::Validation {
            key: "bundle.rank".into(),
            message: format!("preset '{}' needs rank {}, found {rank}", preset.name(), preset.rank()),
        });
    }
    if mass.is_some() && !preset.takes_mass() {
        return Err(CliError::Validation {
            key: "operator_P.mass".into(),
            message: format!("preset '{}' takes no mass", preset.name()),
        });
    }
    let m = mass.unwrap_or(1.0);
    if preset.takes_mass() && !(m >= 0.0) {
        return Err(CliError::Validation {
            key: "operator_P.mass".into(),
            message: format!("mass must be nonnegative, found {m}"),
        });
    }
    let (alpha, beta) = (spacetime.alpha.as_str(), spacetime.beta.as_str());
    let build = |a_t: CoefficientArrays, a_x: CoefficientArrays, b: CoefficientArrays| OperatorConfig {
        preset: Some(preset),
        mass: preset.takes_mass().then_some(m),
        a_t,
        a_x,
        b,
        omega_t: None,
        omega_x: None,
    };
    Ok(match preset {
        Preset::ScalarTransportPair => {
            let a_t = CoefficientArrays {
                re: vec![over(1.0, alpha, "spacetime.alpha")?],
                im: None,
            };
            let fwd = CoefficientArrays {
                re: vec![over(1.0, beta, "spacetime.beta")?],
                im: None,
            };
            let back = CoefficientArrays {
                re: vec![over(-1.0, beta, "spacetime.beta")?],
                im: None,
            };
            (build(a_t.clone(), fwd, zeros(1)), build(a_t, back, zeros(1)))
        }
        _ => {
            let rep = CliffordRep::default();
            let a_t = frame(&rep.gamma0, alpha, "spacetime.alpha")?;
            let a_x = frame(&rep.gamma1, beta, "spacetime.beta")?;
            let (bp, bq) = match preset {
                Preset::DiracMassless => (zeros(2), zeros(2)),
                Preset::DiracMassive => (
                    CoefficientArrays { re: diagonal(2, m), im: None },
                    CoefficientArrays { re: diagonal(2, -m), im: None },
                ),
                _ => (
                    CoefficientArrays {
                        re: zeros(2).re,
                        im: Some(diagonal(2, m)),
                    },
                    CoefficientArrays {
                        re: zeros(2).re,
                        im: Some(diagonal(2, -m)),
                    },
                ),
            };
            (build(a_t.clone(), a_x.clone(), bp), build(a_t, a_x, bq))
        }
    })
}
