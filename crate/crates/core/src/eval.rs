//! Dataset views used by every dataset-level metric: predictions grouped per
//! image next to their references, with optional COCO-style ignore regions.

use std::collections::HashMap;

use crate::data_io::{Dataset, ImageRecord, ReferenceInstance, ScoredPrediction};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::localization::CriterionSpec;
use crate::matching::{match_image, AssignmentStrategy, MatchResult};
use crate::metrics::{ConfusionCounts, RankedDetection};

/// Half-open area interval `(min_exclusive, max_inclusive]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaRange {
    pub min_exclusive: f64,
    pub max_inclusive: f64,
}

impl AreaRange {
    pub fn contains(&self, area: f64) -> bool {
        area > self.min_exclusive && area <= self.max_inclusive
    }
}

#[derive(Debug, Clone)]
pub struct ImageView<'a> {
    pub record: &'a ImageRecord,
    pub refs: Vec<&'a ReferenceInstance>,
    pub preds: Vec<&'a ScoredPrediction>,
    /// References that neither count as misses nor make their matches false positives.
    pub ignored_refs: Vec<&'a ReferenceInstance>,
    /// Unmatched predictions with a box area outside this range are ignored.
    pub pred_area: Option<AreaRange>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictionStatus {
    /// Matched; carries the ranking quality of the match.
    TruePositive(f64),
    FalsePositive,
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub matches: MatchResult,
    /// Status per prediction of the view, in view order.
    pub status: Vec<PredictionStatus>,
}

impl ImageOutcome {
    pub fn counts(&self) -> ConfusionCounts {
        let tp = self.matches.tp_pairs.len() as u64;
        let fp = self
            .status
            .iter()
            .filter(|s| matches!(s, PredictionStatus::FalsePositive))
            .count() as u64;
        ConfusionCounts::new(tp, fp, self.matches.fn_references.len() as u64)
    }
}

impl<'a> ImageView<'a> {
    pub fn evaluate(&self, spec: &CriterionSpec, strategy: AssignmentStrategy) -> Result<ImageOutcome> {
        let matches = match_image(&self.preds, &self.refs, spec, strategy)?;
        let mut status = vec![PredictionStatus::FalsePositive; self.preds.len()];
        for pair in &matches.tp_pairs {
            status[pair.prediction] = PredictionStatus::TruePositive(spec.quality(pair.score));
        }
        if !self.ignored_refs.is_empty() && !matches.fp_predictions.is_empty() {
            let leftover: Vec<&ScoredPrediction> =
                matches.fp_predictions.iter().map(|&i| self.preds[i]).collect();
            let second = match_image(&leftover, &self.ignored_refs, spec, strategy)?;
            for pair in &second.tp_pairs {
                status[matches.fp_predictions[pair.prediction]] = PredictionStatus::Ignored;
            }
        }
        if let Some(range) = self.pred_area {
            for (i, s) in status.iter_mut().enumerate() {
                if *s == PredictionStatus::FalsePositive && !range.contains(self.preds[i].bbox.area()) {
                    *s = PredictionStatus::Ignored;
                }
            }
        }
        Ok(ImageOutcome { matches, status })
    }

    pub fn has_references(&self) -> bool {
        !self.refs.is_empty()
    }
}

/// Predictions grouped per image next to their references.
#[derive(Debug, Clone)]
pub struct EvalSet<'a> {
    images: Vec<ImageView<'a>>,
    pub exec: Exec,
    pub strategy: AssignmentStrategy,
}

impl<'a> EvalSet<'a> {
    /// Fails if a prediction names an image the dataset does not contain.
    pub fn new(dataset: &'a Dataset, preds: &'a [ScoredPrediction]) -> Result<Self> {
        let mut per_image: Vec<Vec<&ScoredPrediction>> = vec![Vec::new(); dataset.images().len()];
        for p in preds {
            let idx = dataset.image_index(&p.image_id).ok_or_else(|| {
                Error::config(format!(
                    "prediction {} references unknown image {}",
                    p.prediction_id, p.image_id
                ))
            })?;
            per_image[idx].push(p);
        }
        let images = dataset
            .images()
            .iter()
            .zip(per_image)
            .enumerate()
            .map(|(i, (record, preds))| ImageView {
                record,
                refs: dataset.references_of(i).iter().collect(),
                preds,
                ignored_refs: Vec::new(),
                pred_area: None,
            })
            .collect();
        Ok(Self {
            images,
            exec: Exec::default(),
            strategy: AssignmentStrategy::default(),
        })
    }

    pub fn from_views(images: Vec<ImageView<'a>>, exec: Exec, strategy: AssignmentStrategy) -> Self {
        Self {
            images,
            exec,
            strategy,
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_strategy(mut self, strategy: AssignmentStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn images(&self) -> &[ImageView<'a>] {
        &self.images
    }

    pub fn filter_images(&self, mut keep: impl FnMut(&ImageRecord) -> bool) -> Self {
        Self {
            images: self.images.iter().filter(|v| keep(v.record)).cloned().collect(),
            exec: self.exec,
            strategy: self.strategy,
        }
    }

    /// Drops predictions below the confidence cutoff.
    pub fn with_min_confidence(&self, cutoff: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.images {
            v.preds.retain(|p| p.confidence >= cutoff);
        }
        out
    }

    /// Distinct center ids in order of first appearance.
    pub fn centers(&self) -> Vec<&'a str> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for v in &self.images {
            let c = v.record.center_id.as_str();
            if seen.insert(c, ()).is_none() {
                out.push(c);
            }
        }
        out
    }

    pub fn for_center(&self, center: &str) -> Self {
        self.filter_images(|r| r.center_id == center)
    }

    pub fn total_references(&self) -> u64 {
        self.images.iter().map(|v| v.refs.len() as u64).sum()
    }

    pub fn n_images(&self) -> usize {
        self.images.len()
    }

    pub fn n_predictions(&self) -> usize {
        self.images.iter().map(|v| v.preds.len()).sum()
    }

    /// Fraction of images with at least one (non-ignored) reference.
    pub fn prevalence(&self) -> Option<f64> {
        if self.images.is_empty() {
            return None;
        }
        let with = self.images.iter().filter(|v| v.has_references()).count();
        Some(with as f64 / self.images.len() as f64)
    }

    pub fn evaluate(&self, spec: &CriterionSpec) -> Result<Vec<ImageOutcome>> {
        spec.validate()?;
        let strategy = self.strategy;
        self.exec.try_map(&self.images, |v| v.evaluate(spec, strategy))
    }

    pub fn confusion(&self, spec: &CriterionSpec) -> Result<ConfusionCounts> {
        Ok(self
            .evaluate(spec)?
            .iter()
            .map(ImageOutcome::counts)
            .fold(ConfusionCounts::default(), |a, b| a + b))
    }

    /// Non-ignored predictions with their TP flag, in image order then input order.
    pub fn ranked_detections(&self, spec: &CriterionSpec) -> Result<Vec<RankedDetection>> {
        let outcomes = self.evaluate(spec)?;
        let mut out = Vec::with_capacity(self.n_predictions());
        for (view, outcome) in self.images.iter().zip(&outcomes) {
            for (p, status) in view.preds.iter().zip(&outcome.status) {
                match *status {
                    PredictionStatus::TruePositive(quality) => {
                        out.push(RankedDetection::new(p.confidence, quality, true))
                    }
                    PredictionStatus::FalsePositive => {
                        out.push(RankedDetection::new(p.confidence, f64::NEG_INFINITY, false))
                    }
                    PredictionStatus::Ignored => {}
                }
            }
        }
        Ok(out)
    }
}
