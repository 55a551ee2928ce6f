use serde::{Deserialize, Serialize};

use super::stats::{dispersion, Dispersion};
use super::MetricSpec;
use crate::data_io::{Cell, Table};
use crate::error::Result;
use crate::eval::EvalSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSummary {
    pub center_id: String,
    /// One entry per configured metric; `None` where undefined.
    pub values: Vec<Option<f64>>,
    /// Frame count.
    pub n: usize,
    /// Fraction of frames with at least one reference.
    pub phi: f64,
    /// The center has no reference at all; its metrics are absent.
    pub no_references: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterReport {
    pub metrics: Vec<String>,
    pub centers: Vec<CenterSummary>,
    /// Per metric, over the centers where it is defined.
    pub dispersion: Vec<Option<Dispersion>>,
}

/// Every metric computed on each center's images alone.
pub fn per_center_report(set: &EvalSet<'_>, metrics: &[MetricSpec]) -> Result<CenterReport> {
    let centers = set.centers();
    let summaries = set.exec.try_map(&centers, |&c| {
        let slice = set.for_center(c);
        let no_references = slice.total_references() == 0;
        let values = if no_references {
            log::warn!("center {c} has no reference objects; its metrics are reported as absent");
            vec![None; metrics.len()]
        } else {
            metrics.iter().map(|m| m.evaluate(&slice)).collect::<Result<_>>()?
        };
        Ok(CenterSummary {
            center_id: c.to_string(),
            values,
            n: slice.n_images(),
            phi: slice.prevalence().unwrap_or(0.0),
            no_references,
        })
    })?;
    let dispersion = (0..metrics.len())
        .map(|j| {
            let vals: Vec<f64> = summaries.iter().filter_map(|s| s.values[j]).collect();
            dispersion(&vals)
        })
        .collect();
    Ok(CenterReport {
        metrics: metrics.iter().map(ToString::to_string).collect(),
        centers: summaries,
        dispersion,
    })
}

pub const DISPERSION_COLUMNS: [&str; 9] = ["metric", "min", "q1", "median", "q3", "max", "mean", "sd", "n_centers"];

impl CenterReport {
    /// Tables `per_center` (rows = centers) and `dispersion` (rows = metrics).
    pub fn to_tables(&self) -> [Table; 2] {
        let mut cols = vec!["center".to_string()];
        cols.extend(self.metrics.iter().cloned());
        cols.extend(["n", "phi", "flag"].map(String::from));
        let mut per_center = Table::new("per_center", cols);
        for c in &self.centers {
            let mut row: Vec<Cell> = vec![c.center_id.as_str().into()];
            row.extend(c.values.iter().map(|v| Cell::from(*v)));
            row.push(c.n.into());
            row.push(c.phi.into());
            row.push(if c.no_references { "no_references".into() } else { Cell::Absent });
            per_center.push(row);
        }
        let mut disp = Table::new("dispersion", DISPERSION_COLUMNS);
        for (m, d) in self.metrics.iter().zip(&self.dispersion) {
            let mut row: Vec<Cell> = vec![m.as_str().into()];
            match d {
                Some(d) => row.extend(
                    [d.min, d.q1, d.median, d.q3, d.max, d.mean, d.sd, d.n as f64].map(Cell::from),
                ),
                None => {
                    row.extend(std::iter::repeat_n(Cell::Absent, 7));
                    row.push(0usize.into());
                }
            }
            disp.push(row);
        }
        [per_center, disp]
    }
}
