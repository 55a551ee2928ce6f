use serde::{Deserialize, Serialize};

use super::stats::{mean, sample_sd};
use crate::data_io::{Cell, ReferenceInstance, Table};
use crate::error::{Error, Result};
use crate::eval::{AreaRange, EvalSet, ImageView};
use crate::localization::{CriterionKind, CriterionSpec};
use crate::metrics::{ap_at, ap_over_range, APConfig};

/// Reference size classes by foreground pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeBuckets {
    pub small_max_area: f64,
    pub medium_max_area: f64,
}

impl Default for SizeBuckets {
    fn default() -> Self {
        Self {
            small_max_area: 32.0 * 32.0,
            medium_max_area: 96.0 * 96.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::Large => "large",
        }
    }
}

impl SizeBuckets {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.small_max_area && self.small_max_area < self.medium_max_area) {
            return Err(Error::config(format!(
                "size buckets need 0 < small_max_area ({}) < medium_max_area ({})",
                self.small_max_area, self.medium_max_area
            )));
        }
        Ok(())
    }

    /// Bucket of an area; boundaries belong to the smaller bucket.
    pub fn classify(&self, area: f64) -> SizeBucket {
        if area <= self.small_max_area {
            SizeBucket::Small
        } else if area <= self.medium_max_area {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }

    pub fn range(&self, bucket: SizeBucket) -> AreaRange {
        let (lo, hi) = match bucket {
            SizeBucket::Small => (f64::NEG_INFINITY, self.small_max_area),
            SizeBucket::Medium => (self.small_max_area, self.medium_max_area),
            SizeBucket::Large => (self.medium_max_area, f64::INFINITY),
        };
        AreaRange {
            min_exclusive: lo,
            max_inclusive: hi,
        }
    }

    /// Restricts `set` to one bucket: other references become ignore regions,
    /// and unmatched predictions with out-of-bucket box area are ignored.
    pub fn restrict<'a>(&self, set: &EvalSet<'a>, bucket: SizeBucket) -> EvalSet<'a> {
        let views = set
            .images()
            .iter()
            .map(|v| {
                let (refs, ignored): (Vec<&ReferenceInstance>, Vec<&ReferenceInstance>) = v
                    .refs
                    .iter()
                    .chain(&v.ignored_refs)
                    .partition(|r| self.classify(r.area() as f64) == bucket);
                ImageView {
                    record: v.record,
                    refs,
                    preds: v.preds.clone(),
                    ignored_refs: ignored,
                    pred_area: Some(self.range(bucket)),
                }
            })
            .collect();
        EvalSet::from_views(views, set.exec, set.strategy)
    }
}

pub const STRATIFY_COLUMNS: [&str; 9] = [
    "center",
    "ap50_small",
    "ap50_medium",
    "ap50_large",
    "ap50_95_small",
    "ap50_95_medium",
    "ap50_95_large",
    "n",
    "phi",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifyRow {
    pub center_id: String,
    /// AP at the single threshold, per bucket (small, medium, large).
    pub ap_single: [Option<f64>; 3],
    /// AP averaged over the threshold grid, per bucket.
    pub ap_range: [Option<f64>; 3],
    /// References per bucket.
    pub bucket_sizes: [u64; 3],
    pub n: usize,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifyTable {
    pub rows: Vec<StratifyRow>,
    /// Mean across centers (cells over centers where defined); n is the total.
    pub all_centers: StratifyRow,
    /// Sample SD across centers for the AP cells.
    pub sd_ap_single: [Option<f64>; 3],
    pub sd_ap_range: [Option<f64>; 3],
}

fn row_for(
    set: &EvalSet<'_>,
    center_id: &str,
    buckets: &SizeBuckets,
    single: &CriterionSpec,
    range: &APConfig,
) -> Result<StratifyRow> {
    let mut ap_single = [None; 3];
    let mut ap_range = [None; 3];
    let mut bucket_sizes = [0; 3];
    for (i, b) in SizeBucket::ALL.into_iter().enumerate() {
        let sub = buckets.restrict(set, b);
        bucket_sizes[i] = sub.total_references();
        if bucket_sizes[i] == 0 {
            continue;
        }
        ap_single[i] = Some(ap_at(&sub, single)?);
        ap_range[i] = Some(ap_over_range(&sub, single, range)?);
    }
    Ok(StratifyRow {
        center_id: center_id.to_string(),
        ap_single,
        ap_range,
        bucket_sizes,
        n: set.n_images(),
        phi: set.prevalence().unwrap_or(0.0),
    })
}

/// AP at `single_tau` and over `range` per size bucket and center.
pub fn stratify_by_size(
    set: &EvalSet<'_>,
    buckets: &SizeBuckets,
    kind: CriterionKind,
    single_tau: f64,
    range: &APConfig,
) -> Result<StratifyTable> {
    buckets.validate()?;
    range.validate()?;
    if !kind.is_overlap() {
        return Err(Error::config(format!("size stratification needs an overlap criterion, got {kind}")));
    }
    let single = CriterionSpec::overlap(kind, single_tau);
    single.validate()?;
    let centers = set.centers();
    let rows = set
        .exec
        .try_map(&centers, |&c| row_for(&set.for_center(c), c, buckets, &single, range))?;

    let across = |f: &dyn Fn(&StratifyRow) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        let vals: Vec<f64> = rows.iter().filter_map(f).collect();
        (mean(&vals), sample_sd(&vals))
    };
    let mut all = StratifyRow {
        center_id: "all_centers".to_string(),
        ap_single: [None; 3],
        ap_range: [None; 3],
        bucket_sizes: [0; 3],
        n: rows.iter().map(|r| r.n).sum(),
        phi: across(&|r| Some(r.phi)).0.unwrap_or(0.0),
    };
    let mut sd_single = [None; 3];
    let mut sd_range = [None; 3];
    for i in 0..3 {
        (all.ap_single[i], sd_single[i]) = across(&|r| r.ap_single[i]);
        (all.ap_range[i], sd_range[i]) = across(&|r| r.ap_range[i]);
        all.bucket_sizes[i] = rows.iter().map(|r| r.bucket_sizes[i]).sum();
    }
    Ok(StratifyTable {
        rows,
        all_centers: all,
        sd_ap_single: sd_single,
        sd_ap_range: sd_range,
    })
}

impl StratifyTable {
    /// The size table (`stratify`) plus bucket sizes (`bucket_sizes`).
    pub fn to_tables(&self) -> [Table; 2] {
        let mut t = Table::new("stratify", STRATIFY_COLUMNS);
        let mut sizes = Table::new("bucket_sizes", ["center", "small", "medium", "large"]);
        for r in self.rows.iter().chain([&self.all_centers]) {
            let mut row: Vec<Cell> = vec![r.center_id.as_str().into()];
            row.extend(r.ap_single.iter().chain(&r.ap_range).map(|v| Cell::from(*v)));
            row.push(r.n.into());
            row.push(r.phi.into());
            t.push(row);
            let mut row: Vec<Cell> = vec![r.center_id.as_str().into()];
            row.extend(r.bucket_sizes.iter().map(|&n| Cell::from(n)));
            sizes.push(row);
        }
        let mut row: Vec<Cell> = vec!["sd".into()];
        row.extend(self.sd_ap_single.iter().chain(&self.sd_ap_range).map(|v| Cell::from(*v)));
        row.extend([Cell::Absent, Cell::Absent]);
        t.push(row);
        [t, sizes]
    }
}
