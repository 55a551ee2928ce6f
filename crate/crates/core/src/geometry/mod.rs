//! Planar geometry on the pixel grid: boxes, run-length masks, convex hulls and overlaps.
//!
//! Pixel `(x, y)` covers the unit square `[x, x+1) × [y, y+1)` and its center is
//! `(x + 0.5, y + 0.5)`. A box selects the pixels whose centers it contains;
//! point-in-mask tests look up the pixel containing the point.

mod bbox;
mod mask;
mod polygon;

use serde::{Deserialize, Serialize};

pub use bbox::{bbox_iou, BBox, Point};
pub use mask::{mask_iou, BinaryMask, Run};
pub use polygon::{
    box_polygon_iou, convex_intersection_area, convex_iou, hull_of_mask, rasterize_polygon,
    rasterize_vertices, ConvexPolygon,
};

use crate::error::{Error, Result};

/// How the center of a reference shape is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// Midpoint of the (tight) bounding box.
    #[default]
    BboxCenter,
    /// Mean of the foreground pixel centers.
    MaskCentroid,
}

/// Shapes with a well-defined center.
pub trait Centered {
    fn center_with(&self, mode: CenterMode) -> Result<Point>;
}

impl Centered for BBox {
    fn center_with(&self, _mode: CenterMode) -> Result<Point> {
        Ok(self.center())
    }
}

impl Centered for BinaryMask {
    fn center_with(&self, mode: CenterMode) -> Result<Point> {
        let empty = || Error::InvalidReference("reference mask is empty".into());
        match mode {
            CenterMode::BboxCenter => Ok(self.tight_box().ok_or_else(empty)?.center()),
            CenterMode::MaskCentroid => self.centroid().ok_or_else(empty),
        }
    }
}

pub fn center_of<S: Centered + ?Sized>(shape: &S, mode: CenterMode) -> Result<Point> {
    shape.center_with(mode)
}

/// Regions supporting boundary-inclusive point membership.
pub trait Region {
    fn contains_point(&self, p: Point) -> bool;
}

impl Region for BBox {
    fn contains_point(&self, p: Point) -> bool {
        self.contains(p)
    }
}

impl Region for ConvexPolygon {
    fn contains_point(&self, p: Point) -> bool {
        self.contains(p)
    }
}

impl Region for BinaryMask {
    /// The pixel containing `p` (floor of both coordinates) must be foreground.
    fn contains_point(&self, p: Point) -> bool {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return false;
        }
        let (fx, fy) = (p.x.floor(), p.y.floor());
        if fx >= f64::from(self.width()) || fy >= f64::from(self.height()) {
            return false;
        }
        self.contains_pixel(fx as u32, fy as u32)
    }
}

pub fn point_in<R: Region + ?Sized>(p: Point, region: &R) -> bool {
    region.contains_point(p)
}
