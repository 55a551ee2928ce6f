//! One-to-one assignment of predictions to references within a single image.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_io::{ReferenceInstance, ScoredPrediction};
use crate::error::{Error, Result};
use crate::localization::{localize, CriterionSpec, LocalizationOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStrategy {
    /// Predictions in descending confidence each take their best unmatched hit.
    #[default]
    GreedyByConfidence,
    /// Maximum number of matched pairs, ties broken by total match quality.
    Optimal,
}

impl fmt::Display for AssignmentStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GreedyByConfidence => "greedy_by_confidence",
            Self::Optimal => "optimal",
        })
    }
}

impl FromStr for AssignmentStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" | "greedy_by_confidence" => Ok(Self::GreedyByConfidence),
            "optimal" => Ok(Self::Optimal),
            _ => Err(Error::config(format!("unknown assignment strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub prediction: usize,
    pub reference: usize,
    pub score: f64,
}

/// Per-image outcome; indices refer to the input slices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp_pairs: Vec<MatchedPair>,
    pub fp_predictions: Vec<usize>,
    pub fn_references: Vec<usize>,
}

impl MatchResult {
    /// Matched reference per prediction.
    pub fn assignment(&self, n_preds: usize) -> Vec<Option<&MatchedPair>> {
        let mut out = vec![None; n_preds];
        for pair in &self.tp_pairs {
            out[pair.prediction] = Some(pair);
        }
        out
    }
}

/// Processing order: confidence descending, then box area descending, then box
/// coordinates ascending, then input position. Only identical boxes with equal
/// confidence fall through to input position.
pub fn prediction_order<P: Borrow<ScoredPrediction>>(preds: &[P]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (preds[a].borrow(), preds[b].borrow());
        pb.confidence
            .total_cmp(&pa.confidence)
            .then_with(|| pb.bbox.area().total_cmp(&pa.bbox.area()))
            .then_with(|| {
                let (ca, cb) = (pa.bbox.to_array(), pb.bbox.to_array());
                ca.iter()
                    .zip(cb.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
            .then(a.cmp(&b))
    });
    order
}

pub fn match_image<P, R>(
    preds: &[P],
    refs: &[R],
    spec: &CriterionSpec,
    strategy: AssignmentStrategy,
) -> Result<MatchResult>
where
    P: Borrow<ScoredPrediction>,
    R: Borrow<ReferenceInstance>,
{
    let outcomes = outcome_matrix(preds, refs, spec)?;
    let mut pairs = match strategy {
        AssignmentStrategy::GreedyByConfidence => greedy(preds, refs, spec, &outcomes),
        AssignmentStrategy::Optimal => optimal(spec, &outcomes, refs.len()),
    };
    pairs.sort_by_key(|p| p.prediction);
    let mut pred_used = vec![false; preds.len()];
    let mut ref_used = vec![false; refs.len()];
    for p in &pairs {
        pred_used[p.prediction] = true;
        ref_used[p.reference] = true;
    }
    Ok(MatchResult {
        tp_pairs: pairs,
        fp_predictions: (0..preds.len()).filter(|&i| !pred_used[i]).collect(),
        fn_references: (0..refs.len()).filter(|&j| !ref_used[j]).collect(),
    })
}

fn outcome_matrix<P, R>(
    preds: &[P],
    refs: &[R],
    spec: &CriterionSpec,
) -> Result<Vec<Vec<LocalizationOutcome>>>
where
    P: Borrow<ScoredPrediction>,
    R: Borrow<ReferenceInstance>,
{
    preds
        .iter()
        .map(|p| {
            refs.iter()
                .map(|r| localize(&p.borrow().bbox, r.borrow(), spec))
                .collect()
        })
        .collect()
}

fn greedy<P, R>(
    preds: &[P],
    refs: &[R],
    spec: &CriterionSpec,
    outcomes: &[Vec<LocalizationOutcome>],
) -> Vec<MatchedPair>
where
    P: Borrow<ScoredPrediction>,
    R: Borrow<ReferenceInstance>,
{
    let mut taken = vec![false; refs.len()];
    let mut pairs = Vec::new();
    for p in prediction_order(preds) {
        let best = (0..refs.len())
            .filter(|&r| !taken[r] && outcomes[p][r].hit)
            .min_by(|&a, &b| {
                let by_quality = if spec.kind.is_point() {
                    // binary score: prefer the smallest reference
                    refs[a].borrow().area().cmp(&refs[b].borrow().area())
                } else {
                    spec.quality(outcomes[p][b].score)
                        .total_cmp(&spec.quality(outcomes[p][a].score))
                };
                by_quality.then(a.cmp(&b))
            });
        if let Some(r) = best {
            taken[r] = true;
            pairs.push(MatchedPair {
                prediction: p,
                reference: r,
                score: outcomes[p][r].score,
            });
        }
    }
    pairs
}

fn optimal(
    spec: &CriterionSpec,
    outcomes: &[Vec<LocalizationOutcome>],
    n_refs: usize,
) -> Vec<MatchedPair> {
    let n_preds = outcomes.len();
    if n_preds == 0 || n_refs == 0 {
        return Vec::new();
    }
    // every hit outweighs any sum of tie-break qualities (each in [0, 1])
    let big = (n_preds.min(n_refs) + 1) as f64;
    let weight = |p: usize, r: usize| {
        let o = &outcomes[p][r];
        if !o.hit {
            return 0.0;
        }
        let q = if spec.kind.is_overlap() {
            o.score
        } else if spec.kind.is_point() {
            0.0
        } else {
            1.0 / (1.0 + o.score)
        };
        big + q
    };
    let transpose = n_preds > n_refs;
    let (rows, cols) = if transpose { (n_refs, n_preds) } else { (n_preds, n_refs) };
    let w: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| if transpose { weight(j, i) } else { weight(i, j) })
                .collect()
        })
        .collect();
    max_weight_assignment(&w)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            let (p, r) = if transpose { (j, i) } else { (i, j) };
            outcomes[p][r].hit.then(|| MatchedPair {
                prediction: p,
                reference: r,
                score: outcomes[p][r].score,
            })
        })
        .collect()
}

/// Hungarian algorithm with potentials for a `rows × cols` weight matrix,
/// `rows <= cols`. Returns the column assigned to each row.
fn max_weight_assignment(w: &[Vec<f64>]) -> Vec<usize> {
    let n = w.len();
    let m = w.first().map_or(0, Vec::len);
    debug_assert!(n <= m);
    let cost = |i: usize, j: usize| -w[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assigned = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assigned[owner[j] - 1] = j - 1;
        }
    }
    assigned
}
