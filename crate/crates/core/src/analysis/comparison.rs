use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stats::mean;
use crate::data_io::{Cell, Table};
use crate::error::{Error, Result};
use crate::eval::EvalSet;
use crate::localization::{CriterionKind, CriterionSpec};
use crate::metrics::{ap_at, counting_metric, CountingMetric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ComparisonMetric {
    Counting(CountingMetric),
    Ap,
}

impl ComparisonMetric {
    /// sensitivity, ppv, f1, f2, ap
    pub fn defaults() -> Vec<ComparisonMetric> {
        vec![
            ComparisonMetric::Counting(CountingMetric::Sensitivity),
            ComparisonMetric::Counting(CountingMetric::Ppv),
            ComparisonMetric::Counting(CountingMetric::FBeta(1.0)),
            ComparisonMetric::Counting(CountingMetric::FBeta(2.0)),
            ComparisonMetric::Ap,
        ]
    }
}

impl fmt::Display for ComparisonMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComparisonMetric::Counting(m) => m.fmt(f),
            ComparisonMetric::Ap => f.write_str("ap"),
        }
    }
}

impl FromStr for ComparisonMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ap" {
            Ok(ComparisonMetric::Ap)
        } else {
            s.parse().map(ComparisonMetric::Counting)
        }
    }
}

impl TryFrom<String> for ComparisonMetric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ComparisonMetric> for String {
    fn from(m: ComparisonMetric) -> String {
        m.to_string()
    }
}

/// How counting metrics combine centers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Counts summed over all images.
    #[default]
    Pooled,
    /// Metric per center, then the mean over centers where it is defined.
    PerCenterMean,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Pooling::Pooled),
            "per_center_mean" => Ok(Pooling::PerCenterMean),
            _ => Err(Error::config(format!("unknown pooling {s:?} (pooled, per_center_mean)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    pub metrics: Vec<ComparisonMetric>,
    /// Predictions below this confidence are dropped for counting metrics
    /// (AP always uses the full ranked list).
    pub confidence_cutoff: Option<f64>,
    pub pooling: Pooling,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            metrics: ComparisonMetric::defaults(),
            confidence_cutoff: None,
            pooling: Pooling::Pooled,
        }
    }
}

/// Box IoU at 0.5 and the three point-in-shape criteria.
pub fn default_comparison_criteria() -> Vec<CriterionSpec> {
    vec![
        CriterionSpec::overlap(CriterionKind::BoxIou, 0.5),
        CriterionSpec::point(CriterionKind::PointInBox),
        CriterionSpec::point(CriterionKind::PointInMask),
        CriterionSpec::point(CriterionKind::PointInHull),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub criteria: Vec<String>,
    pub metrics: Vec<String>,
    /// `values[metric][criterion]`.
    pub values: Vec<Vec<Option<f64>>>,
}

fn undefined_to_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_) | Error::UndefinedCurve(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn metric_on(set: &EvalSet<'_>, metric: ComparisonMetric, spec: &CriterionSpec, cfg: &ComparisonConfig) -> Result<Option<f64>> {
    match metric {
        ComparisonMetric::Ap => undefined_to_none(ap_at(set, spec)),
        ComparisonMetric::Counting(m) => {
            let counts = match cfg.confidence_cutoff {
                Some(c) => set.with_min_confidence(c).confusion(spec)?,
                None => set.confusion(spec)?,
            };
            undefined_to_none(counting_metric(&counts, m))
        }
    }
}

/// Rows are metrics, columns are criteria.
pub fn criterion_comparison(set: &EvalSet<'_>, criteria: &[CriterionSpec], cfg: &ComparisonConfig) -> Result<ComparisonTable> {
    if criteria.is_empty() || cfg.metrics.is_empty() {
        return Err(Error::config("criterion comparison needs at least one criterion and one metric"));
    }
    for c in criteria {
        c.validate()?;
    }
    let slices: Vec<EvalSet<'_>> = match cfg.pooling {
        Pooling::Pooled => vec![set.clone()],
        Pooling::PerCenterMean => set.centers().into_iter().map(|c| set.for_center(c)).collect(),
    };
    let cells: Vec<(usize, usize)> = (0..cfg.metrics.len())
        .flat_map(|i| (0..criteria.len()).map(move |j| (i, j)))
        .collect();
    let flat = set.exec.try_map(&cells, |&(i, j)| {
        let vals: Vec<f64> = slices
            .iter()
            .map(|s| metric_on(s, cfg.metrics[i], &criteria[j], cfg))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(mean(&vals))
    })?;
    Ok(ComparisonTable {
        criteria: criteria.iter().map(ToString::to_string).collect(),
        metrics: cfg.metrics.iter().map(ToString::to_string).collect(),
        values: flat.chunks(criteria.len()).map(<[_]>::to_vec).collect(),
    })
}

impl ComparisonTable {
    pub fn to_table(&self) -> Table {
        let mut cols = vec!["metric".to_string()];
        cols.extend(self.criteria.iter().cloned());
        let mut t = Table::new("criterion_comparison", cols);
        for (m, vals) in self.metrics.iter().zip(&self.values) {
            let mut row: Vec<Cell> = vec![m.as_str().into()];
            row.extend(vals.iter().map(|v| Cell::from(*v)));
            t.push(row);
        }
        t
    }

    pub fn get(&self, metric: &str, criterion: &str) -> Option<f64> {
        let i = self.metrics.iter().position(|m| m == metric)?;
        let j = self.criteria.iter().position(|c| c == criterion)?;
        self.values[i][j]
    }
}
