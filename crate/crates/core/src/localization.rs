//! Hit/miss decisions between one predicted box and one reference object.
//!
//! Criteria are either overlap-based (box, mask or hull IoU against a threshold)
//! or point-based (the prediction's box midpoint inside the reference box, mask
//! or hull, or within a distance of the reference center).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_io::ReferenceInstance;
use crate::error::{Error, Result};
use crate::geometry::{bbox_iou, box_polygon_iou, mask_iou, point_in, BBox, CenterMode, Centered};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    BoxIou,
    MaskIou,
    HullIou,
    PointInBox,
    PointInMask,
    PointInHull,
    CenterDistance,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 7] = [
        CriterionKind::BoxIou,
        CriterionKind::MaskIou,
        CriterionKind::HullIou,
        CriterionKind::PointInBox,
        CriterionKind::PointInMask,
        CriterionKind::PointInHull,
        CriterionKind::CenterDistance,
    ];

    pub const OVERLAP: [CriterionKind; 3] =
        [CriterionKind::BoxIou, CriterionKind::MaskIou, CriterionKind::HullIou];

    pub fn is_overlap(self) -> bool {
        matches!(self, Self::BoxIou | Self::MaskIou | Self::HullIou)
    }

    pub fn is_point(self) -> bool {
        matches!(self, Self::PointInBox | Self::PointInMask | Self::PointInHull)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BoxIou => "box_iou",
            Self::MaskIou => "mask_iou",
            Self::HullIou => "hull_iou",
            Self::PointInBox => "point_in_box",
            Self::PointInMask => "point_in_mask",
            Self::PointInHull => "point_in_hull",
            Self::CenterDistance => "center_distance",
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown criterion kind {s:?} (expected one of {})",
                    Self::ALL.map(|k| k.as_str()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauUnit {
    #[default]
    Pixels,
    /// Fraction of the image diagonal.
    DiagonalFraction,
}

/// A localization criterion.
///
/// Written as `kind[:tau][:unit][:strict][:center]`, e.g. `box_iou:0.5`,
/// `mask_iou:0:strict`, `point_in_mask`, `center_distance:0.1:diag:centroid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    /// IoU threshold for overlap kinds, distance limit for `center_distance`, unused by point kinds.
    pub tau: Option<f64>,
    pub tau_unit: TauUnit,
    /// Overlap kinds require `score > tau` instead of `score >= tau`.
    pub strict_positive: bool,
    /// Reference center used by `center_distance`.
    pub center_mode: CenterMode,
}

impl CriterionSpec {
    pub fn overlap(kind: CriterionKind, tau: f64) -> Self {
        debug_assert!(kind.is_overlap());
        Self {
            kind,
            tau: Some(tau),
            tau_unit: TauUnit::Pixels,
            strict_positive: false,
            center_mode: CenterMode::default(),
        }
    }

    pub fn point(kind: CriterionKind) -> Self {
        debug_assert!(kind.is_point());
        Self {
            kind,
            tau: None,
            tau_unit: TauUnit::Pixels,
            strict_positive: false,
            center_mode: CenterMode::default(),
        }
    }

    pub fn center_distance(tau: f64, unit: TauUnit) -> Self {
        Self {
            kind: CriterionKind::CenterDistance,
            tau: Some(tau),
            tau_unit: unit,
            strict_positive: false,
            center_mode: CenterMode::default(),
        }
    }

    pub fn strict(mut self) -> Self {
        self.strict_positive = true;
        self
    }

    pub fn with_center_mode(mut self, mode: CenterMode) -> Self {
        self.center_mode = mode;
        self
    }

    /// Same criterion at a different threshold.
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_point() {
            return Ok(());
        }
        let tau = self
            .tau
            .ok_or_else(|| Error::config(format!("criterion {} requires a threshold", self.kind)))?;
        if self.kind.is_overlap() {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::config(format!(
                    "IoU threshold {tau} for {} outside [0, 1]",
                    self.kind
                )));
            }
        } else if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::config(format!("distance threshold {tau} must be >= 0")));
        }
        Ok(())
    }

    /// Ranking key where larger is better: IoU, 1/0 for point kinds, negated distance.
    pub fn quality(&self, score: f64) -> f64 {
        match self.kind {
            CriterionKind::CenterDistance => -score,
            _ => score,
        }
    }

    fn is_hit(&self, score: f64, tau: f64, diagonal: f64) -> bool {
        match self.kind {
            k if k.is_overlap() => {
                if self.strict_positive {
                    score > tau
                } else {
                    score >= tau
                }
            }
            CriterionKind::CenterDistance => {
                let limit = match self.tau_unit {
                    TauUnit::Pixels => tau,
                    TauUnit::DiagonalFraction => tau * diagonal,
                };
                score <= limit
            }
            _ => score > 0.0,
        }
    }
}

impl fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if self.kind.is_point() {
            return Ok(());
        }
        if let Some(tau) = self.tau {
            write!(f, ":{tau}")?;
        }
        if self.kind == CriterionKind::CenterDistance {
            if self.tau_unit == TauUnit::DiagonalFraction {
                f.write_str(":diag")?;
            }
            if self.center_mode == CenterMode::MaskCentroid {
                f.write_str(":centroid")?;
            }
        }
        if self.strict_positive {
            f.write_str(":strict")?;
        }
        Ok(())
    }
}

impl FromStr for CriterionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let kind: CriterionKind = parts.next().unwrap_or_default().parse()?;
        let mut spec = Self {
            kind,
            tau: None,
            tau_unit: TauUnit::Pixels,
            strict_positive: false,
            center_mode: CenterMode::default(),
        };
        for (pos, token) in parts.enumerate() {
            match token {
                "strict" => spec.strict_positive = true,
                "px" | "pixels" => spec.tau_unit = TauUnit::Pixels,
                "diag" | "diagonal_fraction" => spec.tau_unit = TauUnit::DiagonalFraction,
                "centroid" | "mask_centroid" => spec.center_mode = CenterMode::MaskCentroid,
                "box_center" | "bbox_center" => spec.center_mode = CenterMode::BboxCenter,
                t if pos == 0 => {
                    let tau: f64 = t.parse().map_err(|_| {
                        Error::config(format!("invalid threshold {t:?} in criterion {s:?}"))
                    })?;
                    spec.tau = Some(tau);
                }
                t => return Err(Error::config(format!("unexpected token {t:?} in criterion {s:?}"))),
            }
        }
        if kind.is_point() && spec.tau.is_some() {
            return Err(Error::config(format!("point criterion {kind} takes no threshold")));
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for CriterionSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CriterionSpec> for String {
    fn from(c: CriterionSpec) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationOutcome {
    /// IoU, center distance, or 1/0 for point kinds.
    pub score: f64,
    pub hit: bool,
}

pub fn localize(
    pred: &BBox,
    reference: &ReferenceInstance,
    spec: &CriterionSpec,
) -> Result<LocalizationOutcome> {
    let tau = match (spec.kind.is_point(), spec.tau) {
        (true, _) => 0.0,
        (false, Some(t)) => t,
        (false, None) => {
            return Err(Error::config(format!("criterion {} requires a threshold", spec.kind)))
        }
    };
    let pred_center = pred.center();
    let score = match spec.kind {
        CriterionKind::BoxIou => bbox_iou(pred, reference.tight_box())?,
        CriterionKind::MaskIou => mask_iou(pred, reference.mask())?,
        CriterionKind::HullIou => box_polygon_iou(pred, reference.hull()),
        CriterionKind::PointInBox => indicator(point_in(pred_center, reference.tight_box())),
        CriterionKind::PointInMask => indicator(point_in(pred_center, reference.mask())),
        CriterionKind::PointInHull => indicator(point_in(pred_center, reference.hull())),
        CriterionKind::CenterDistance => {
            let ref_center = reference.mask().center_with(spec.center_mode)?;
            pred_center.distance(&ref_center)
        }
    };
    Ok(LocalizationOutcome {
        score,
        hit: spec.is_hit(score, tau, reference.image_diagonal()),
    })
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}
