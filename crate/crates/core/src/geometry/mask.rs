use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{Error, Result};

/// A horizontal span of foreground pixels `x_start .. x_start + len` on row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Run {
    pub y: u32,
    pub x_start: u32,
    pub len: u32,
}

impl Run {
    pub fn new(y: u32, x_start: u32, len: u32) -> Self {
        Self { y, x_start, len }
    }

    /// One past the last covered column.
    pub fn x_end(&self) -> u32 {
        self.x_start + self.len
    }
}

impl From<[u32; 3]> for Run {
    fn from(v: [u32; 3]) -> Self {
        Run::new(v[0], v[1], v[2])
    }
}

impl From<Run> for [u32; 3] {
    fn from(r: Run) -> Self {
        [r.y, r.x_start, r.len]
    }
}

/// Foreground pixels on a `width × height` grid, stored as sorted,
/// non-overlapping, non-adjacent runs per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    runs: Vec<Run>,
    // runs[row_offsets[y]..row_offsets[y + 1]] are the runs of row y
    row_offsets: Vec<usize>,
    area: u64,
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            runs: Vec::new(),
            row_offsets: vec![0; height as usize + 1],
            area: 0,
        }
    }

    /// Builds a mask from runs in any order. Overlapping or touching runs are merged.
    pub fn from_runs(width: u32, height: u32, runs: impl IntoIterator<Item = Run>) -> Result<Self> {
        let mut runs: Vec<Run> = runs.into_iter().collect();
        for r in &runs {
            if r.len == 0 {
                return Err(Error::InvalidReference(format!(
                    "zero-length run at row {} column {}",
                    r.y, r.x_start
                )));
            }
            if r.y >= height || u64::from(r.x_start) + u64::from(r.len) > u64::from(width) {
                return Err(Error::InvalidReference(format!(
                    "run (row {}, column {}, length {}) outside {width}x{height} grid",
                    r.y, r.x_start, r.len
                )));
            }
        }
        runs.sort_unstable();
        let mut merged: Vec<Run> = Vec::with_capacity(runs.len());
        for r in runs {
            match merged.last_mut() {
                Some(last) if last.y == r.y && r.x_start <= last.x_end() => {
                    let end = last.x_end().max(r.x_end());
                    last.len = end - last.x_start;
                }
                _ => merged.push(r),
            }
        }
        Ok(Self::from_sorted(width, height, merged))
    }

    pub fn from_pixels(
        width: u32,
        height: u32,
        pixels: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        Self::from_runs(width, height, pixels.into_iter().map(|(x, y)| Run::new(y, x, 1)))
    }

    /// Evaluates `f(x, y)` on every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut runs = Vec::new();
        for y in 0..height {
            let mut start: Option<u32> = None;
            for x in 0..width {
                match (f(x, y), start) {
                    (true, None) => start = Some(x),
                    (false, Some(s)) => {
                        runs.push(Run::new(y, s, x - s));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                runs.push(Run::new(y, s, width - s));
            }
        }
        Self::from_sorted(width, height, runs)
    }

    fn from_sorted(width: u32, height: u32, runs: Vec<Run>) -> Self {
        let mut row_offsets = vec![0usize; height as usize + 1];
        for r in &runs {
            row_offsets[r.y as usize + 1] += 1;
        }
        for y in 0..height as usize {
            row_offsets[y + 1] += row_offsets[y];
        }
        let area = runs.iter().map(|r| u64::from(r.len)).sum();
        Self {
            width,
            height,
            runs,
            row_offsets,
            area,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    pub fn row(&self, y: u32) -> &[Run] {
        if y >= self.height {
            return &[];
        }
        let y = y as usize;
        &self.runs[self.row_offsets[y]..self.row_offsets[y + 1]]
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        let row = self.row(y);
        // first run starting after x; the candidate is the one before it
        let idx = row.partition_point(|r| r.x_start <= x);
        idx > 0 && x < row[idx - 1].x_end()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.runs
            .iter()
            .flat_map(|r| (r.x_start..r.x_end()).map(move |x| (x, r.y)))
    }

    /// Foreground count on row `y` within columns `x_lo..=x_hi`.
    pub fn count_in_row(&self, y: u32, x_lo: u32, x_hi: u32) -> u64 {
        self.row(y)
            .iter()
            .map(|r| {
                let lo = r.x_start.max(x_lo);
                let hi = (r.x_end() - 1).min(x_hi);
                if lo > hi {
                    0
                } else {
                    u64::from(hi - lo + 1)
                }
            })
            .sum()
    }

    /// Smallest box covering the full extent of every foreground pixel.
    pub fn tight_box(&self) -> Option<BBox> {
        let first = self.runs.first()?;
        let last = self.runs.last()?;
        let x_min = self.runs.iter().map(|r| r.x_start).min()?;
        let x_max = self.runs.iter().map(|r| r.x_end()).max()?;
        Some(
            BBox::new(
                f64::from(x_min),
                f64::from(first.y),
                f64::from(x_max),
                f64::from(last.y + 1),
            )
            .expect("run extents are ordered"),
        )
    }

    /// Mean of foreground pixel centers.
    pub fn centroid(&self) -> Option<super::Point> {
        if self.is_empty() {
            return None;
        }
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for r in &self.runs {
            let len = f64::from(r.len);
            // sum over x in [s, s+len) of (x + 0.5)
            sx += len * f64::from(r.x_start) + 0.5 * len * len;
            sy += len * (f64::from(r.y) + 0.5);
        }
        let n = self.area as f64;
        Some(super::Point::new(sx / n, sy / n))
    }
}

/// Inclusive range of pixel indices whose centers lie in `[lo, hi]`, clipped to `0..n`.
pub(crate) fn center_index_range(lo: f64, hi: f64, n: u32) -> Option<(u32, u32)> {
    if n == 0 {
        return None;
    }
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(f64::from(n - 1));
    if first > last {
        None
    } else {
        Some((first as u32, last as u32))
    }
}

/// IoU between the pixels whose centers fall inside `pred` and the foreground of `reference`.
pub fn mask_iou(pred: &BBox, reference: &BinaryMask) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidReference("reference mask is empty".into()));
    }
    let cols = center_index_range(pred.x_min(), pred.x_max(), reference.width());
    let rows = center_index_range(pred.y_min(), pred.y_max(), reference.height());
    let (pred_count, inter) = match (cols, rows) {
        (Some((x0, x1)), Some((y0, y1))) => {
            let count = u64::from(x1 - x0 + 1) * u64::from(y1 - y0 + 1);
            let inter: u64 = (y0..=y1).map(|y| reference.count_in_row(y, x0, x1)).sum();
            (count, inter)
        }
        _ => (0, 0),
    };
    let union = pred_count + reference.area() - inter;
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn runs_are_merged_and_sorted() {
        let m = BinaryMask::from_runs(
            10,
            3,
            [Run::new(1, 5, 2), Run::new(0, 0, 2), Run::new(1, 2, 3), Run::new(1, 3, 1)],
        )
        .unwrap();
        assert_eq!(m.runs(), &[Run::new(0, 0, 2), Run::new(1, 2, 5)]);
        assert_eq!(m.area(), 7);
        assert!(m.contains_pixel(6, 1));
        assert!(!m.contains_pixel(7, 1));
        assert!(!m.contains_pixel(1, 1));
    }

    #[test]
    fn out_of_grid_runs_are_rejected() {
        assert!(BinaryMask::from_runs(4, 4, [Run::new(0, 3, 2)]).is_err());
        assert!(BinaryMask::from_runs(4, 4, [Run::new(4, 0, 1)]).is_err());
        assert!(BinaryMask::from_runs(4, 4, [Run::new(0, 0, 0)]).is_err());
    }

    #[test]
    fn iou_of_tight_box_of_full_block_is_one() {
        let m = BinaryMask::from_fn(8, 8, |x, y| (2..5).contains(&x) && (1..7).contains(&y));
        let tight = m.tight_box().unwrap();
        assert_eq!(tight, bx(2., 1., 5., 7.));
        assert_eq!(mask_iou(&tight, &m).unwrap(), 1.0);
    }

    #[test]
    fn iou_of_disjoint_box_is_zero() {
        let m = BinaryMask::from_pixels(8, 8, [(0, 0)]).unwrap();
        assert_eq!(mask_iou(&bx(4., 4., 6., 6.), &m).unwrap(), 0.0);
        // box entirely off-grid
        assert_eq!(mask_iou(&bx(20., 20., 30., 30.), &m).unwrap(), 0.0);
    }

    #[test]
    fn l_shape_against_full_grid() {
        // pixel enumeration: pred covers 4 pixels, 3 of them foreground
        let m = BinaryMask::from_pixels(2, 2, [(0, 0), (1, 0), (0, 1)]).unwrap();
        assert_eq!(mask_iou(&bx(0., 0., 2., 2.), &m).unwrap(), 0.75);
    }

    #[test]
    fn empty_reference_is_rejected() {
        let m = BinaryMask::empty(4, 4);
        assert!(matches!(
            mask_iou(&bx(0., 0., 1., 1.), &m),
            Err(Error::InvalidReference(_))
        ));
    }

    #[test]
    fn centroid_of_l_shape() {
        let m = BinaryMask::from_pixels(2, 2, [(0, 0), (1, 0), (0, 1)]).unwrap();
        let c = m.centroid().unwrap();
        assert!((c.x - 2.5 / 3.0).abs() < 1e-12);
        assert!((c.y - 2.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn center_index_range_uses_pixel_centers() {
        assert_eq!(center_index_range(0.0, 2.0, 10), Some((0, 1)));
        assert_eq!(center_index_range(0.6, 1.4, 10), None);
        assert_eq!(center_index_range(0.5, 0.5, 10), Some((0, 0)));
        assert_eq!(center_index_range(-5.0, 50.0, 10), Some((0, 9)));
    }
}
