use std::collections::HashMap;
use std::ops::Range;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hull_of_mask, BBox, BinaryMask, ConvexPolygon};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub center_id: String,
    #[serde(default)]
    pub patient_id: String,
    #[serde(default)]
    pub sequence_id: String,
}

impl ImageRecord {
    pub fn diagonal(&self) -> f64 {
        f64::from(self.width).hypot(f64::from(self.height))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolypType {
    Flat,
    Protruded,
}

/// A reference object. The tight box is computed on construction, the hull on first use.
#[derive(Debug, Clone)]
pub struct ReferenceInstance {
    pub reference_id: String,
    pub image_id: String,
    pub polyp_type: Option<PolypType>,
    mask: BinaryMask,
    tight_box: BBox,
    hull: OnceLock<ConvexPolygon>,
}

impl ReferenceInstance {
    pub fn new(
        reference_id: impl Into<String>,
        image_id: impl Into<String>,
        mask: BinaryMask,
        polyp_type: Option<PolypType>,
    ) -> Result<Self> {
        let reference_id = reference_id.into();
        let tight_box = mask.tight_box().ok_or_else(|| {
            Error::InvalidReference(format!("reference {reference_id} has an empty mask"))
        })?;
        Ok(Self {
            reference_id,
            image_id: image_id.into(),
            polyp_type,
            mask,
            tight_box,
            hull: OnceLock::new(),
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn tight_box(&self) -> &BBox {
        &self.tight_box
    }

    pub fn hull(&self) -> &ConvexPolygon {
        self.hull
            .get_or_init(|| hull_of_mask(&self.mask).expect("mask is nonempty"))
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.mask.area()
    }

    pub fn image_diagonal(&self) -> f64 {
        f64::from(self.mask.width()).hypot(f64::from(self.mask.height()))
    }
}

impl PartialEq for ReferenceInstance {
    fn eq(&self, other: &Self) -> bool {
        self.reference_id == other.reference_id
            && self.image_id == other.image_id
            && self.polyp_type == other.polyp_type
            && self.mask == other.mask
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub prediction_id: String,
    pub image_id: String,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Useful,
    NotUseful,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub prediction_id: String,
    pub rating: Rating,
    pub rater_id: String,
}

/// Images plus their references, grouped so that each image's references are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageRecord>,
    references: Vec<ReferenceInstance>,
    ranges: Vec<Range<usize>>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(images: Vec<ImageRecord>, references: Vec<ReferenceInstance>) -> Result<Self> {
        let mut index = HashMap::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            if index.insert(img.image_id.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate image_id {}", img.image_id)));
            }
        }
        let mut keyed = Vec::with_capacity(references.len());
        for r in references {
            let Some(&i) = index.get(&r.image_id) else {
                return Err(Error::config(format!(
                    "reference {} points to unknown image {}",
                    r.reference_id, r.image_id
                )));
            };
            keyed.push((i, r));
        }
        // stable: keeps file order within an image
        keyed.sort_by_key(|(i, _)| *i);
        let mut ranges = vec![0..0; images.len()];
        let mut references = Vec::with_capacity(keyed.len());
        for (pos, (i, r)) in keyed.into_iter().enumerate() {
            if ranges[i].is_empty() {
                ranges[i] = pos..pos;
            }
            ranges[i].end = pos + 1;
            references.push(r);
        }
        Ok(Self {
            images,
            references,
            ranges,
            index,
        })
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn references(&self) -> &[ReferenceInstance] {
        &self.references
    }

    pub fn image_index(&self, image_id: &str) -> Option<usize> {
        self.index.get(image_id).copied()
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.image_index(image_id).map(|i| &self.images[i])
    }

    /// References of the image at position `idx`.
    pub fn references_of(&self, idx: usize) -> &[ReferenceInstance] {
        &self.references[self.ranges[idx].clone()]
    }
}
