use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data_io::{Dataset, Diagnostic, DiagnosticKind, Rating, RatingRecord, ScoredPrediction, Table};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::localization::{localize, CriterionKind, CriterionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub criterion: String,
    /// Share of "useful" ratings whose prediction meets the criterion.
    pub accepted_useful: Option<f64>,
    /// Share of "not useful" ratings whose prediction fails the criterion.
    pub rejected_not_useful: Option<f64>,
    pub n_useful: u64,
    pub n_useful_accepted: u64,
    pub n_not_useful: u64,
    pub n_not_useful_rejected: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Sorted by accepted-useful fraction, highest first (absent last).
    pub rows: Vec<AgreementRow>,
}

/// Overlap criteria at 0.5, the point criteria, and "any overlap" with box and mask.
pub fn default_agreement_criteria() -> Vec<CriterionSpec> {
    vec![
        CriterionSpec::overlap(CriterionKind::BoxIou, 0.5),
        CriterionSpec::overlap(CriterionKind::HullIou, 0.5),
        CriterionSpec::overlap(CriterionKind::MaskIou, 0.5),
        CriterionSpec::point(CriterionKind::PointInBox),
        CriterionSpec::point(CriterionKind::PointInHull),
        CriterionSpec::point(CriterionKind::PointInMask),
        CriterionSpec::overlap(CriterionKind::BoxIou, 0.0).strict(),
        CriterionSpec::overlap(CriterionKind::MaskIou, 0.0).strict(),
    ]
}

/// Whether `pred` meets `spec` with its best-scoring reference on the image.
/// A hit against the best reference is equivalent to a hit against any.
fn accepted(dataset: &Dataset, pred: &ScoredPrediction, spec: &CriterionSpec) -> Result<bool> {
    let Some(idx) = dataset.image_index(&pred.image_id) else {
        return Ok(false);
    };
    for r in dataset.references_of(idx) {
        if localize(&pred.bbox, r, spec)?.hit {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Compares each criterion's verdict on rated predictions with the ratings.
///
/// Every rating counts once, so a prediction rated by several raters weighs
/// accordingly. Fails if a rating names an unknown prediction.
pub fn agreement_analysis(
    dataset: &Dataset,
    preds: &[ScoredPrediction],
    ratings: &[RatingRecord],
    criteria: &[CriterionSpec],
    exec: Exec,
) -> Result<AgreementReport> {
    let by_id: HashMap<&str, &ScoredPrediction> = preds.iter().map(|p| (p.prediction_id.as_str(), p)).collect();
    let dangling: Vec<Diagnostic> = ratings
        .iter()
        .enumerate()
        .filter(|(_, r)| !by_id.contains_key(r.prediction_id.as_str()))
        .map(|(i, r)| Diagnostic {
            file: "ratings".into(),
            location: format!("record {}", i + 1),
            kind: DiagnosticKind::DanglingReference,
            message: format!("unknown prediction_id {}", r.prediction_id),
        })
        .collect();
    if !dangling.is_empty() {
        return Err(Error::Validation(dangling));
    }
    for c in criteria {
        c.validate()?;
    }
    let mut rows = exec.try_map(criteria, |spec| {
        let mut row = AgreementRow {
            criterion: spec.to_string(),
            accepted_useful: None,
            rejected_not_useful: None,
            n_useful: 0,
            n_useful_accepted: 0,
            n_not_useful: 0,
            n_not_useful_rejected: 0,
        };
        for r in ratings {
            let hit = accepted(dataset, by_id[r.prediction_id.as_str()], spec)?;
            match r.rating {
                Rating::Useful => {
                    row.n_useful += 1;
                    row.n_useful_accepted += u64::from(hit);
                }
                Rating::NotUseful => {
                    row.n_not_useful += 1;
                    row.n_not_useful_rejected += u64::from(!hit);
                }
            }
        }
        let frac = |k: u64, n: u64| (n > 0).then(|| k as f64 / n as f64);
        row.accepted_useful = frac(row.n_useful_accepted, row.n_useful);
        row.rejected_not_useful = frac(row.n_not_useful_rejected, row.n_not_useful);
        Ok(row)
    })?;
    // stable: equal fractions keep the criteria order
    rows.sort_by(|a, b| {
        let key = |r: &AgreementRow| r.accepted_useful.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a))
    });
    Ok(AgreementReport { rows })
}

pub const AGREEMENT_COLUMNS: [&str; 7] = [
    "criterion",
    "accepted_useful",
    "rejected_not_useful",
    "n_useful",
    "n_useful_accepted",
    "n_not_useful",
    "n_not_useful_rejected",
];

impl AgreementReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new("agreement", AGREEMENT_COLUMNS);
        for r in &self.rows {
            t.push(vec![
                r.criterion.as_str().into(),
                r.accepted_useful.into(),
                r.rejected_not_useful.into(),
                r.n_useful.into(),
                r.n_useful_accepted.into(),
                r.n_not_useful.into(),
                r.n_not_useful_rejected.into(),
            ]);
        }
        t
    }
}
