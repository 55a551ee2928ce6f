//! Ensemble postprocessing: per-member non-maximum suppression, weighted boxes
//! fusion across members, and shrinking of confident boxes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data_io::ScoredPrediction;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{bbox_iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub confidence: f64,
    /// Ensemble member; for fused boxes, the member of the cluster's first box.
    pub model_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub nms_iou: f64,
    pub wbf_iou: f64,
    pub skip_box_thresh: f64,
    /// One positive weight per member; empty means equal weights.
    pub model_weights: Vec<f64>,
    /// Scale fused confidence by `min(cluster size, members) / members`.
    pub score_rescale: bool,
    pub shrink_conf: f64,
    /// Linear reduction of width and height, e.g. 0.02 for 2%.
    pub shrink_factor: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.5,
            wbf_iou: 0.5,
            skip_box_thresh: 0.02,
            model_weights: Vec::new(),
            score_rescale: true,
            shrink_conf: 0.4,
            shrink_factor: 0.02,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nms_iou", self.nms_iou),
            ("wbf_iou", self.wbf_iou),
            ("skip_box_thresh", self.skip_box_thresh),
            ("shrink_conf", self.shrink_conf),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.shrink_factor) {
            return Err(Error::config(format!(
                "shrink_factor = {} outside [0, 1)",
                self.shrink_factor
            )));
        }
        if self.model_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("model weights must be positive"));
        }
        Ok(())
    }

    /// Weights normalized to mean 1, one per member.
    fn normalized_weights(&self, n_models: usize) -> Result<Vec<f64>> {
        if self.model_weights.is_empty() {
            return Ok(vec![1.0; n_models]);
        }
        if self.model_weights.len() != n_models {
            return Err(Error::config(format!(
                "{} model weights given for {n_models} ensemble members",
                self.model_weights.len()
            )));
        }
        let mean = self.model_weights.iter().sum::<f64>() / n_models as f64;
        Ok(self.model_weights.iter().map(|w| w / mean).collect())
    }
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    // two zero-area boxes never suppress each other
    bbox_iou(a, b).unwrap_or(0.0)
}

fn by_confidence_desc(boxes: &mut [ScoredBox]) {
    boxes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
}

/// Keeps a box iff its IoU with every already kept box is below `iou_thresh`.
/// Output is in descending confidence (stable for ties).
pub fn nms(boxes: &[ScoredBox], iou_thresh: f64) -> Vec<ScoredBox> {
    let mut sorted = boxes.to_vec();
    by_confidence_desc(&mut sorted);
    let mut kept: Vec<ScoredBox> = Vec::with_capacity(sorted.len());
    for b in sorted {
        if kept.iter().all(|k| overlap(&k.bbox, &b.bbox) < iou_thresh) {
            kept.push(b);
        }
    }
    kept
}

struct Cluster {
    members: Vec<(BBox, f64)>,
    fused: BBox,
    model_id: usize,
}

impl Cluster {
    fn refit(&mut self) {
        let total: f64 = self.members.iter().map(|(_, c)| c).sum();
        let mut acc = [0.0f64; 4];
        for (b, c) in &self.members {
            let w = if total > 0.0 { *c / total } else { 1.0 / self.members.len() as f64 };
            for (a, v) in acc.iter_mut().zip(b.to_array()) {
                *a += w * v;
            }
        }
        // the weighted mean stays inside the member envelope up to rounding
        let (lo, hi) = self.envelope();
        let v: Vec<f64> = (0..4).map(|i| acc[i].clamp(lo[i], hi[i])).collect();
        self.fused = BBox::new(v[0], v[1], v[2].max(v[0]), v[3].max(v[1])).expect("finite");
    }

    fn envelope(&self) -> ([f64; 4], [f64; 4]) {
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for (b, _) in &self.members {
            for (i, v) in b.to_array().into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        (lo, hi)
    }
}

/// Weighted boxes fusion over the box lists of `per_model.len()` ensemble members.
///
/// Boxes are visited in descending weighted confidence and join the first
/// cluster whose fused box overlaps them with IoU >= `wbf_iou`.
pub fn weighted_boxes_fusion(per_model: &[Vec<ScoredBox>], cfg: &FusionConfig) -> Result<Vec<ScoredBox>> {
    cfg.validate()?;
    let n_models = per_model.len();
    let weights = cfg.normalized_weights(n_models)?;
    let mut entries: Vec<ScoredBox> = per_model
        .iter()
        .enumerate()
        .flat_map(|(m, boxes)| {
            let w = weights[m];
            boxes.iter().map(move |b| ScoredBox {
                bbox: b.bbox,
                confidence: b.confidence * w,
                model_id: m,
            })
        })
        .filter(|b| b.confidence >= cfg.skip_box_thresh)
        .collect();
    by_confidence_desc(&mut entries);

    let mut clusters: Vec<Cluster> = Vec::new();
    for e in entries {
        match clusters
            .iter_mut()
            .find(|c| overlap(&c.fused, &e.bbox) >= cfg.wbf_iou)
        {
            Some(c) => {
                c.members.push((e.bbox, e.confidence));
                c.refit();
            }
            None => clusters.push(Cluster {
                members: vec![(e.bbox, e.confidence)],
                fused: e.bbox,
                model_id: e.model_id,
            }),
        }
    }

    let mut out: Vec<ScoredBox> = clusters
        .into_iter()
        .map(|c| {
            let n = c.members.len();
            let mut conf = c.members.iter().map(|(_, s)| s).sum::<f64>() / n as f64;
            if cfg.score_rescale {
                conf *= n.min(n_models) as f64 / n_models as f64;
            }
            ScoredBox {
                bbox: c.fused,
                confidence: conf.min(1.0),
                model_id: c.model_id,
            }
        })
        .collect();
    by_confidence_desc(&mut out);
    Ok(out)
}

/// Boxes with confidence above `conf_thresh` lose `factor` of their width and
/// height around a fixed center.
pub fn shrink_boxes(boxes: &[ScoredBox], conf_thresh: f64, factor: f64) -> Vec<ScoredBox> {
    boxes
        .iter()
        .map(|b| {
            if b.confidence <= conf_thresh || factor == 0.0 {
                return *b;
            }
            let c = b.bbox.center();
            let hw = 0.5 * b.bbox.width() * (1.0 - factor);
            let hh = 0.5 * b.bbox.height() * (1.0 - factor);
            ScoredBox {
                bbox: BBox::new(c.x - hw, c.y - hh, c.x + hw, c.y + hh).expect("shrunk box is ordered"),
                ..*b
            }
        })
        .collect()
}

/// NMS per member, weighted boxes fusion, then shrinking.
pub fn fuse_image(per_model: &[Vec<ScoredBox>], cfg: &FusionConfig) -> Result<Vec<ScoredBox>> {
    let suppressed: Vec<Vec<ScoredBox>> = per_model.iter().map(|b| nms(b, cfg.nms_iou)).collect();
    let fused = weighted_boxes_fusion(&suppressed, cfg)?;
    Ok(shrink_boxes(&fused, cfg.shrink_conf, cfg.shrink_factor))
}

/// Runs [`fuse_image`] on every image named by any member.
///
/// Images appear in order of first mention (member 0 first); fused predictions
/// are named `<image_id>#<k>`.
pub fn fuse_predictions(
    members: &[Vec<ScoredPrediction>],
    cfg: &FusionConfig,
    exec: Exec,
) -> Result<Vec<ScoredPrediction>> {
    cfg.validate()?;
    cfg.normalized_weights(members.len())?;
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, Vec<Vec<ScoredBox>>> = HashMap::new();
    for (m, preds) in members.iter().enumerate() {
        for p in preds {
            let slot = grouped.entry(p.image_id.as_str()).or_insert_with(|| {
                order.push(p.image_id.as_str());
                vec![Vec::new(); members.len()]
            });
            slot[m].push(ScoredBox {
                bbox: p.bbox,
                confidence: p.confidence,
                model_id: m,
            });
        }
    }
    let fused = exec.try_map(&order, |image_id| fuse_image(&grouped[image_id], cfg))?;
    Ok(order
        .iter()
        .zip(fused)
        .flat_map(|(image_id, boxes)| {
            boxes.into_iter().enumerate().map(move |(k, b)| ScoredPrediction {
                prediction_id: format!("{image_id}#{k}"),
                image_id: image_id.to_string(),
                bbox: b.bbox,
                confidence: b.confidence,
            })
        })
        .collect())
}
