use serde::{Deserialize, Serialize};

use crate::data_io::{Cell, Table};
use crate::error::{Error, Result};
use crate::eval::EvalSet;
use crate::localization::{CriterionKind, CriterionSpec};
use crate::metrics::{ap_per_threshold, tau_range, APConfig, Interpolation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub kind: CriterionKind,
    /// `(tau, AP)` with strictly increasing tau.
    pub points: Vec<(f64, f64)>,
}

/// Thresholds 0.05, 0.10, ..., 0.95.
pub fn default_sweep_grid() -> Vec<f64> {
    tau_range(0.05, 0.05, 0.95).expect("valid grid")
}

/// AP recomputed at every threshold, one curve per overlap kind.
pub fn threshold_sweep(set: &EvalSet<'_>, kinds: &[CriterionKind], taus: &[f64]) -> Result<Vec<SweepCurve>> {
    let cfg = APConfig {
        interpolation: Interpolation::Coco101Point,
        tau_grid: taus.to_vec(),
    };
    cfg.validate()?;
    if let Some(k) = kinds.iter().find(|k| !k.is_overlap()) {
        return Err(Error::config(format!("threshold sweep needs overlap criteria, got {k}")));
    }
    kinds
        .iter()
        .map(|&kind| {
            let aps = ap_per_threshold(set, &CriterionSpec::overlap(kind, taus[0]), &cfg)?;
            Ok(SweepCurve {
                kind,
                points: taus.iter().copied().zip(aps).collect(),
            })
        })
        .collect()
}

/// Table `sweep`: one row per threshold, one column per kind.
pub fn sweep_table(curves: &[SweepCurve]) -> Table {
    let mut cols = vec!["tau".to_string()];
    cols.extend(curves.iter().map(|c| c.kind.to_string()));
    let mut t = Table::new("sweep", cols);
    let n = curves.first().map_or(0, |c| c.points.len());
    for i in 0..n {
        let mut row: Vec<Cell> = vec![curves[0].points[i].0.into()];
        row.extend(curves.iter().map(|c| Cell::from(c.points[i].1)));
        t.push(row);
    }
    t
}
