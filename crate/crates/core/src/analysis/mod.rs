//! Multi-center analyses: per-center variability, size stratification,
//! threshold sweeps, criterion comparison, agreement with clinical ratings,
//! and a synthetic data generator.

mod agreement;
mod centers;
mod comparison;
mod size;
pub mod stats;
mod sweep;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use agreement::{agreement_analysis, default_agreement_criteria, AgreementReport, AgreementRow};
pub use centers::{per_center_report, CenterReport, CenterSummary};
pub use comparison::{
    criterion_comparison, default_comparison_criteria, ComparisonConfig, ComparisonMetric, ComparisonTable, Pooling,
};
pub use size::{stratify_by_size, SizeBucket, SizeBuckets, StratifyRow, StratifyTable, STRATIFY_COLUMNS};
pub use stats::{dispersion, Dispersion};
pub use sweep::{default_sweep_grid, sweep_table, threshold_sweep, SweepCurve};
pub use synth::{generate_synthetic, NoiseModel, SynthConfig, SyntheticData};

use crate::error::{Error, Result};
use crate::eval::EvalSet;
use crate::metrics::{counting_metric, ApDefinition, CountingMetric};

/// One metric value per evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricSpec {
    Counting {
        metric: CountingMetric,
        criterion: crate::localization::CriterionSpec,
    },
    Ap(ApDefinition),
}

impl MetricSpec {
    /// `None` when the metric is undefined on `set` (zero denominator, no references).
    pub fn evaluate(&self, set: &EvalSet<'_>) -> Result<Option<f64>> {
        let r = match self {
            MetricSpec::Counting { metric, criterion } => {
                counting_metric(&set.confusion(criterion)?, *metric)
            }
            MetricSpec::Ap(def) => def.evaluate(set),
        };
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_) | Error::UndefinedCurve(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Counting { metric, criterion } => write!(f, "{metric}@{criterion}"),
            MetricSpec::Ap(def) => def.fmt(f),
        }
    }
}

/// `<metric>@<criterion>`, e.g. `f2@point_in_mask` or `ap@box_iou:0.5`;
/// `ap@<kind>[a:step:b]` averages AP over a threshold grid.
impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (metric, rest) = s
            .split_once('@')
            .ok_or_else(|| Error::config(format!("metric {s:?} is not of the form metric@criterion")))?;
        if metric == "ap" {
            if let Some((crit, grid)) = rest.strip_suffix(']').and_then(|r| r.split_once('[')) {
                let grid = crate::metrics::parse_tau_grid(grid)?;
                return Ok(MetricSpec::Ap(ApDefinition {
                    criterion: format!("{crit}:{}", grid[0]).parse()?,
                    grid: Some(grid),
                }));
            }
            return Ok(MetricSpec::Ap(ApDefinition {
                criterion: rest.parse()?,
                grid: None,
            }));
        }
        Ok(MetricSpec::Counting {
            metric: metric.parse()?,
            criterion: rest.parse()?,
        })
    }
}

impl TryFrom<String> for MetricSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MetricSpec> for String {
    fn from(m: MetricSpec) -> String {
        m.to_string()
    }
}
