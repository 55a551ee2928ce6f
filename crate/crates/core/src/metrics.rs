//! Counting metrics, precision/recall curves and COCO-style average precision.

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalSet;
use crate::localization::{CriterionKind, CriterionSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMetric {
    /// Recall, `tp / (tp + fn)`.
    Sensitivity,
    /// Precision, `tp / (tp + fp)`.
    Ppv,
    FBeta(f64),
}

impl fmt::Display for CountingMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sensitivity => f.write_str("sensitivity"),
            Self::Ppv => f.write_str("ppv"),
            Self::FBeta(b) => write!(f, "f{b}"),
        }
    }
}

impl FromStr for CountingMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sensitivity" | "recall" => Ok(Self::Sensitivity),
            "ppv" | "precision" => Ok(Self::Ppv),
            _ => s
                .strip_prefix('f')
                .and_then(|b| b.parse::<f64>().ok())
                .filter(|b| *b > 0.0 && b.is_finite())
                .map(Self::FBeta)
                .ok_or_else(|| Error::config(format!("unknown counting metric {s:?}"))),
        }
    }
}

/// Errors with [`Error::UndefinedMetric`] when a needed denominator is zero.
pub fn counting_metric(c: &ConfusionCounts, metric: CountingMetric) -> Result<f64> {
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    let undefined = |what: &str| Err(Error::UndefinedMetric(format!("{metric}: {what} is zero")));
    match metric {
        CountingMetric::Sensitivity => {
            if c.tp + c.fn_ == 0 {
                return undefined("tp + fn");
            }
            Ok(tp / (tp + fn_))
        }
        CountingMetric::Ppv => {
            if c.tp + c.fp == 0 {
                return undefined("tp + fp");
            }
            Ok(tp / (tp + fp))
        }
        CountingMetric::FBeta(beta) => {
            if c.tp + c.fn_ == 0 {
                return undefined("tp + fn");
            }
            if c.tp + c.fp == 0 {
                return undefined("tp + fp");
            }
            // (1+b²)PR / (b²P + R) written on counts; also defined when P = R = 0
            let b2 = beta * beta;
            Ok((1.0 + b2) * tp / ((1.0 + b2) * tp + b2 * fn_ + fp))
        }
    }
}

/// One prediction on the dataset-wide ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedDetection {
    pub confidence: f64,
    /// Secondary sort key, larger first (match quality; `-inf` for false positives).
    pub quality: f64,
    pub tp: bool,
}

impl RankedDetection {
    pub fn new(confidence: f64, quality: f64, tp: bool) -> Self {
        Self {
            confidence,
            quality,
            tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    /// One point per ranked prediction; recall is non-decreasing.
    pub points: Vec<PrPoint>,
    pub total_references: u64,
}

/// Cumulative precision and recall down the confidence-ranked list.
///
/// Ties in confidence are ordered by quality descending, then input order.
pub fn pr_curve(detections: &[RankedDetection], total_references: u64) -> Result<PRCurve> {
    if total_references == 0 {
        return Err(Error::UndefinedCurve("no reference objects".into()));
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.confidence
            .total_cmp(&da.confidence)
            .then(db.quality.total_cmp(&da.quality))
    });
    let total = total_references as f64;
    let mut tp = 0u64;
    let points = order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            if detections[i].tp {
                tp += 1;
            }
            PrPoint {
                recall: tp as f64 / total,
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect();
    Ok(PRCurve {
        points,
        total_references,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Mean interpolated precision at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Coco101Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APConfig {
    pub interpolation: Interpolation,
    pub tau_grid: Vec<f64>,
}

impl Default for APConfig {
    /// IoU thresholds 0.50:0.05:0.95.
    fn default() -> Self {
        Self::range(0.5, 0.05, 0.95).expect("valid grid")
    }
}

impl APConfig {
    pub fn single(tau: f64) -> Self {
        Self {
            interpolation: Interpolation::Coco101Point,
            tau_grid: vec![tau],
        }
    }

    pub fn range(start: f64, step: f64, stop: f64) -> Result<Self> {
        Ok(Self {
            interpolation: Interpolation::Coco101Point,
            tau_grid: tau_range(start, step, stop)?,
        })
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() {
            return Err(Error::config("threshold grid is empty"));
        }
        if self.tau_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("threshold grid must be strictly increasing"));
        }
        Ok(())
    }
}

/// `start, start+step, ..., stop` with values rounded to 12 decimals.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
pub fn tau_range(start: f64, step: f64, stop: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::config(format!("invalid threshold range {start}:{step}:{stop}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Parses `start:step:stop` or a comma-separated list.
pub fn parse_tau_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::config(format!("invalid threshold grid {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        tau_range(v[0], v[1], v[2])?
    } else if parts.len() == 1 {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    } else {
        return Err(bad());
    };
    let cfg = APConfig {
        interpolation: Interpolation::Coco101Point,
        tau_grid: grid,
    };
    cfg.validate()?;
    Ok(cfg.tau_grid)
}

/// Inverse of [`parse_tau_grid`]: `start:step:stop` when the grid is evenly
/// spaced, a comma list otherwise.
pub fn format_tau_grid(grid: &[f64]) -> String {
    if grid.len() >= 3 {
        let step = ((grid[1] - grid[0]) * 1e12).round() / 1e12;
        if tau_range(grid[0], step, grid[grid.len() - 1]).ok().as_deref() == Some(grid) {
            return format!("{}:{step}:{}", grid[0], grid[grid.len() - 1]);
        }
    }
    grid.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub const RECALL_POINTS: usize = 101;

/// Mean of the interpolated precision `max{p(r') : r' >= r}` over the 101 recall
/// points; recall levels that are never reached contribute 0.
pub fn average_precision(curve: &PRCurve, cfg: &APConfig) -> f64 {
    let Interpolation::Coco101Point = cfg.interpolation;
    let pts = &curve.points;
    if pts.is_empty() {
        return 0.0;
    }
    let mut envelope: Vec<f64> = pts.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / 100.0;
        let idx = pts.partition_point(|p| p.recall < r);
        if idx < pts.len() {
            sum += envelope[idx];
        }
    }
    sum / RECALL_POINTS as f64
}

/// AP at a single criterion: match every image, rank, integrate.
pub fn ap_at(set: &EvalSet<'_>, spec: &CriterionSpec) -> Result<f64> {
    let detections = set.ranked_detections(spec)?;
    let curve = pr_curve(&detections, set.total_references())?;
    Ok(average_precision(&curve, &APConfig::default()))
}

/// Mean AP over the thresholds of `cfg`, re-matching at each threshold.
pub fn ap_over_range(set: &EvalSet<'_>, spec: &CriterionSpec, cfg: &APConfig) -> Result<f64> {
    let aps = ap_per_threshold(set, spec, cfg)?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// AP at every threshold of `cfg`, in grid order.
pub fn ap_per_threshold(set: &EvalSet<'_>, spec: &CriterionSpec, cfg: &APConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if spec.kind.is_point() {
        return Err(Error::config(format!(
            "threshold range requires an overlap or distance criterion, got {}",
            spec.kind
        )));
    }
    set.exec
        .try_map(&cfg.tau_grid, |&tau| ap_at(set, &spec.with_tau(tau)))
}

/// An AP definition: one criterion, optionally averaged over a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApDefinition {
    pub criterion: CriterionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

impl ApDefinition {
    pub fn evaluate(&self, set: &EvalSet<'_>) -> Result<f64> {
        match &self.grid {
            None => ap_at(set, &self.criterion),
            Some(grid) => ap_over_range(
                set,
                &self.criterion,
                &APConfig {
                    interpolation: Interpolation::Coco101Point,
                    tau_grid: grid.clone(),
                },
            ),
        }
    }
}

impl fmt::Display for ApDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.grid {
            None => write!(f, "ap@{}", self.criterion),
            Some(g) => write!(f, "ap@{}[{}]", self.criterion.kind, format_tau_grid(g)),
        }
    }
}

/// Mean over a user-supplied list of AP definitions (composite challenge scores).
pub fn mean_of_aps(set: &EvalSet<'_>, defs: &[ApDefinition]) -> Result<f64> {
    if defs.is_empty() {
        return Err(Error::config("empty list of AP definitions"));
    }
    let aps = set.exec.try_map(defs, |d| d.evaluate(set))?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// AP@0.5 and AP@[0.5:0.95] for an overlap kind.
pub fn coco_pair(kind: CriterionKind) -> [ApDefinition; 2] {
    [
        ApDefinition {
            criterion: CriterionSpec::overlap(kind, 0.5),
            grid: None,
        },
        ApDefinition {
            criterion: CriterionSpec::overlap(kind, 0.5),
            grid: Some(APConfig::default().tau_grid),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn counting_examples() {
        let c = ConfusionCounts::new(3, 1, 1);
        assert_eq!(counting_metric(&c, CountingMetric::Sensitivity).unwrap(), 0.75);
        assert_eq!(counting_metric(&c, CountingMetric::Ppv).unwrap(), 0.75);
        assert!(close(counting_metric(&c, CountingMetric::FBeta(1.0)).unwrap(), 0.75));
    }

    #[test]
    fn f2_from_precision_and_recall() {
        // P = 0.5, R = 1.0: tp 1, fp 1, fn 0
        let c = ConfusionCounts::new(1, 1, 0);
        let f2 = counting_metric(&c, CountingMetric::FBeta(2.0)).unwrap();
        assert!(close(f2, 2.5 / 3.0));
    }

    #[test]
    fn perfect_counts() {
        let c = ConfusionCounts::new(5, 0, 0);
        for m in [CountingMetric::Sensitivity, CountingMetric::Ppv, CountingMetric::FBeta(2.0)] {
            assert_eq!(counting_metric(&c, m).unwrap(), 1.0);
        }
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let none = ConfusionCounts::default();
        assert!(matches!(
            counting_metric(&none, CountingMetric::Sensitivity),
            Err(Error::UndefinedMetric(_))
        ));
        let only_fn = ConfusionCounts::new(0, 0, 2);
        assert!(counting_metric(&only_fn, CountingMetric::Ppv).is_err());
        assert_eq!(counting_metric(&only_fn, CountingMetric::Sensitivity).unwrap(), 0.0);
        assert!(counting_metric(&only_fn, CountingMetric::FBeta(1.0)).is_err());
        let miss_all = ConfusionCounts::new(0, 3, 2);
        assert_eq!(counting_metric(&miss_all, CountingMetric::FBeta(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn metric_names() {
        assert_eq!("f2".parse::<CountingMetric>().unwrap(), CountingMetric::FBeta(2.0));
        assert_eq!(CountingMetric::FBeta(1.0).to_string(), "f1");
        assert!("f0".parse::<CountingMetric>().is_err());
        assert!("auc".parse::<CountingMetric>().is_err());
    }

    #[test]
    fn curve_examples() {
        let single = pr_curve(&[RankedDetection::new(0.9, 1.0, true)], 1).unwrap();
        assert_eq!(single.points, vec![PrPoint { recall: 1.0, precision: 1.0 }]);

        let dets = [
            RankedDetection::new(0.8, 1.0, true),
            RankedDetection::new(0.9, f64::NEG_INFINITY, false),
        ];
        let c = pr_curve(&dets, 1).unwrap();
        assert_eq!(
            c.points,
            vec![
                PrPoint { recall: 0.0, precision: 0.0 },
                PrPoint { recall: 1.0, precision: 0.5 }
            ]
        );

        let half = pr_curve(&[RankedDetection::new(0.9, 1.0, true)], 2).unwrap();
        assert_eq!(half.points, vec![PrPoint { recall: 0.5, precision: 1.0 }]);

        assert!(matches!(pr_curve(&[], 0), Err(Error::UndefinedCurve(_))));
    }

    #[test]
    fn ap_examples() {
        let cfg = APConfig::default();
        let curve = |pts: &[(f64, f64)]| PRCurve {
            points: pts.iter().map(|&(recall, precision)| PrPoint { recall, precision }).collect(),
            total_references: 1,
        };
        assert_eq!(average_precision(&curve(&[(1.0, 1.0)]), &cfg), 1.0);
        assert!(close(average_precision(&curve(&[(0.0, 0.0), (1.0, 0.5)]), &cfg), 0.5));
        assert!(close(average_precision(&curve(&[(0.5, 1.0)]), &cfg), 51.0 / 101.0));
        assert_eq!(average_precision(&curve(&[]), &cfg), 0.0);
    }

    #[test]
    fn tie_order_prefers_quality() {
        let dets = [
            RankedDetection::new(0.5, f64::NEG_INFINITY, false),
            RankedDetection::new(0.5, 0.7, true),
        ];
        let c = pr_curve(&dets, 1).unwrap();
        assert_eq!(c.points[0].precision, 1.0);
    }

    #[test]
    fn grids() {
        let g = tau_range(0.05, 0.05, 0.95).unwrap();
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[2], 0.15);
        assert_eq!(g[18], 0.95);
        assert_eq!(APConfig::default().tau_grid.len(), 10);
        assert_eq!(parse_tau_grid("0.5,0.75").unwrap(), vec![0.5, 0.75]);
        assert_eq!(parse_tau_grid("0.05:0.05:0.95").unwrap().len(), 19);
        assert!(parse_tau_grid("0.75,0.5").is_err());
        assert!(parse_tau_grid("0.5:0:1").is_err());
        assert!(parse_tau_grid("x").is_err());
    }
}
