//! Observed convergence orders over grid-refinement ladders.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::Result;

/// `log₂(e_coarse / e_fine)` for a halving of `dx`.
pub fn observed_order(e_coarse: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderRow {
    pub nx: usize,
    pub dx: f64,
    pub error: f64,
    /// Order against the previous (coarser) row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceTable {
    pub quantity: String,
    pub rows: Vec<LadderRow>,
}

impl ConvergenceTable {
    /// Builds rows from `(nx, dx, error)` triples ordered coarse to fine.
    pub fn from_errors(quantity: &str, levels: &[(usize, f64, f64)]) -> ConvergenceTable {
        let rows = levels
            .iter()
            .enumerate()
            .map(|(i, &(nx, dx, error))| LadderRow {
                nx,
                dx,
                error,
                order: (i > 0).then(|| observed_order(levels[i - 1].2, error)),
            })
            .collect();
        ConvergenceTable {
            quantity: quantity.to_string(),
            rows,
        }
    }

    /// Smallest order between adjacent rows; `None` for fewer than two rows.
    pub fn min_order(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.order).reduce(f64::min)
    }

    pub fn finest_error(&self) -> Option<f64> {
        self.rows.last().map(|r| r.error)
    }
}

/// Runs `run(nx) -> (dx, error)` for each ladder level concurrently and
/// tabulates the results in ladder order.
pub fn run_ladder<F>(quantity: &str, nxs: &[usize], run: F) -> Result<ConvergenceTable>
where
    F: Fn(usize) -> Result<(f64, f64)> + Sync,
{
    let results: Vec<Result<(f64, f64)>> = nxs.par_iter().map(|&nx| run(nx)).collect();
    let mut levels = Vec::with_capacity(nxs.len());
    for (&nx, r) in nxs.iter().zip(results) {
        let (dx, e) = r?;
        levels.push((nx, dx, e));
    }
    Ok(ConvergenceTable::from_errors(quantity, &levels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_errors_give_order_two() {
        let t = run_ladder("e", &[64, 128, 256], |nx| {
            let dx = 1.0 / nx as f64;
            Ok((dx, 3.0 * dx * dx))
        })
        .unwrap();
        assert_eq!(t.rows[0].order, None);
        assert!((t.min_order().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(t.finest_error(), Some(3.0 / 65536.0));
    }
}
