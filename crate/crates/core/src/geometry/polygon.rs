use super::bbox::{BBox, Point};
use super::mask::{center_index_range, BinaryMask, Run};
use crate::error::{Error, Result};

/// A strictly convex polygon with counter-clockwise vertices (positive shoelace area).
///
/// Vertices are stored canonically: collinear points removed, first vertex the
/// lexicographically smallest `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
    bounds: BBox,
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

impl ConvexPolygon {
    /// Validates and canonicalizes. Clockwise input is reversed.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let mut pts = vertices;
        pts.dedup();
        if pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 distinct vertices, got {}",
                pts.len()
            )));
        }
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        // drop collinear vertices
        let mut changed = true;
        while changed && pts.len() >= 3 {
            changed = false;
            let n = pts.len();
            for i in 0..n {
                let prev = pts[(i + n - 1) % n];
                let next = pts[(i + 1) % n];
                if cross(prev, pts[i], next) == 0.0 {
                    pts.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        let n = pts.len();
        if n < 3 || signed_area(&pts) <= 0.0 {
            return Err(Error::InvalidPolygon("polygon has zero area".into()));
        }
        for i in 0..n {
            if cross(pts[i], pts[(i + 1) % n], pts[(i + 2) % n]) <= 0.0 {
                return Err(Error::InvalidPolygon("polygon is not convex".into()));
            }
        }
        let start = (0..n)
            .min_by(|&a, &b| {
                (pts[a].x, pts[a].y)
                    .partial_cmp(&(pts[b].x, pts[b].y))
                    .expect("finite")
            })
            .expect("nonempty");
        pts.rotate_left(start);
        let bounds = bounds_of(&pts);
        Ok(Self {
            vertices: pts,
            bounds,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn bounds(&self) -> BBox {
        self.bounds
    }

    /// Boundary-inclusive containment.
    pub fn contains(&self, p: Point) -> bool {
        if !self.bounds.contains(p) {
            return false;
        }
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let tol = 1e-9 * (1.0 + a.distance(&b));
            cross(a, b, p) >= -tol
        })
    }
}

fn bounds_of(pts: &[Point]) -> BBox {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    BBox::new(x0, y0, x1, y1).expect("ordered by construction")
}

impl TryFrom<&BBox> for ConvexPolygon {
    type Error = Error;

    fn try_from(b: &BBox) -> Result<Self> {
        if b.is_degenerate() {
            return Err(Error::InvalidPolygon("zero-area box".into()));
        }
        ConvexPolygon::new(vec![
            Point::new(b.x_min(), b.y_min()),
            Point::new(b.x_max(), b.y_min()),
            Point::new(b.x_max(), b.y_max()),
            Point::new(b.x_min(), b.y_max()),
        ])
    }
}

/// Convex hull of the corner points of every foreground pixel (Andrew's monotone chain).
///
/// Corners are integral, so the orientation tests are exact.
pub fn hull_of_mask(mask: &BinaryMask) -> Result<ConvexPolygon> {
    if mask.is_empty() {
        return Err(Error::InvalidReference("reference mask is empty".into()));
    }
    // only the end columns of each run can be extreme
    let mut pts: Vec<(i64, i64)> = Vec::with_capacity(mask.runs().len() * 4);
    for r in mask.runs() {
        let (y0, y1) = (i64::from(r.y), i64::from(r.y) + 1);
        let (x0, x1) = (i64::from(r.x_start), i64::from(r.x_end()));
        pts.extend_from_slice(&[(x0, y0), (x0, y1), (x1, y0), (x1, y1)]);
    }
    pts.sort_unstable();
    pts.dedup();

    fn turn(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    }

    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    ConvexPolygon::new(
        hull.into_iter()
            .map(|(x, y)| Point::new(x as f64, y as f64))
            .collect(),
    )
}

/// Clips `subject` by the half-planes of `clip` (Sutherland-Hodgman).
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let c_cur = cross(a, b, cur);
            let c_prev = cross(a, b, prev);
            if c_cur >= 0.0 {
                if c_prev < 0.0 {
                    output.push(intersect(prev, cur, c_prev, c_cur));
                }
                output.push(cur);
            } else if c_prev >= 0.0 {
                output.push(intersect(prev, cur, c_prev, c_cur));
            }
        }
    }
    output
}

fn intersect(p: Point, q: Point, cp: f64, cq: f64) -> Point {
    let t = cp / (cp - cq);
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

pub fn convex_intersection_area(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    if a.bounds.intersection_area(&b.bounds) <= 0.0 {
        return 0.0;
    }
    let clipped = clip_convex(&a.vertices, &b.vertices);
    if clipped.len() < 3 {
        0.0
    } else {
        signed_area(&clipped).max(0.0)
    }
}

/// Exact IoU of two convex polygons.
pub fn convex_iou(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let inter = convex_intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// IoU of a box against a convex polygon; a zero-area box scores 0.
pub fn box_polygon_iou(b: &BBox, poly: &ConvexPolygon) -> f64 {
    match ConvexPolygon::try_from(b) {
        Ok(bp) => convex_iou(&bp, poly),
        Err(_) => 0.0,
    }
}

/// Pixels whose centers lie inside the convex polygon (boundary-inclusive).
pub fn rasterize_polygon(poly: &ConvexPolygon, width: u32, height: u32) -> BinaryMask {
    rasterize_vertices(poly.vertices(), width, height)
}

/// Scanline rasterization of an arbitrary simple polygon by the pixel-center rule.
///
/// Interior spans come from even-odd crossings; every edge additionally
/// contributes its own closed extent on the scanline so boundary centers are kept.
pub fn rasterize_vertices(vertices: &[Point], width: u32, height: u32) -> BinaryMask {
    let n = vertices.len();
    if n < 3 || width == 0 || height == 0 {
        return BinaryMask::empty(width, height);
    }
    let mut runs = Vec::new();
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut crossings: Vec<f64> = Vec::new();
    for y in 0..height {
        let sy = f64::from(y) + 0.5;
        spans.clear();
        crossings.clear();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            let (lo, hi) = if a.y <= b.y { (a.y, b.y) } else { (b.y, a.y) };
            if sy < lo || sy > hi {
                continue;
            }
            if a.y == b.y {
                spans.push((a.x.min(b.x), a.x.max(b.x)));
                continue;
            }
            let x = a.x + (sy - a.y) * (b.x - a.x) / (b.y - a.y);
            spans.push((x, x));
            if (a.y <= sy) != (b.y <= sy) {
                crossings.push(x);
            }
        }
        crossings.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
        for pair in crossings.chunks_exact(2) {
            spans.push((pair[0], pair[1]));
        }
        for &(lo, hi) in &spans {
            if let Some((x0, x1)) = center_index_range(lo, hi, width) {
                runs.push(Run::new(y, x0, x1 - x0 + 1));
            }
        }
    }
    BinaryMask::from_runs(width, height, runs).expect("runs clipped to grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn square(x0: f64, y0: f64, s: f64) -> ConvexPolygon {
        ConvexPolygon::new(vec![p(x0, y0), p(x0 + s, y0), p(x0 + s, y0 + s), p(x0, y0 + s)]).unwrap()
    }

    #[test]
    fn canonical_form() {
        let cw = ConvexPolygon::new(vec![p(0., 2.), p(2., 2.), p(2., 0.), p(1., 0.), p(0., 0.)]).unwrap();
        assert_eq!(cw.vertices(), &[p(0., 0.), p(2., 0.), p(2., 2.), p(0., 2.)]);
        assert_eq!(cw.area(), 4.0);
    }

    #[test]
    fn rejects_degenerate_and_concave() {
        assert!(ConvexPolygon::new(vec![p(0., 0.), p(1., 1.), p(2., 2.)]).is_err());
        assert!(ConvexPolygon::new(vec![p(0., 0.), p(1., 0.)]).is_err());
        let dart = vec![p(0., 0.), p(4., 0.), p(1., 1.), p(0., 4.)];
        assert!(ConvexPolygon::new(dart).is_err());
    }

    #[test]
    fn hull_of_single_pixel() {
        let m = BinaryMask::from_pixels(3, 3, [(0, 0)]).unwrap();
        let h = hull_of_mask(&m).unwrap();
        assert_eq!(h.vertices(), &[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)]);
    }

    #[test]
    fn hull_of_block_is_its_square() {
        let m = BinaryMask::from_fn(10, 10, |x, y| (2..6).contains(&x) && (3..7).contains(&y));
        let h = hull_of_mask(&m).unwrap();
        assert_eq!(h.vertices(), &[p(2., 3.), p(6., 3.), p(6., 7.), p(2., 7.)]);
    }

    #[test]
    fn hull_of_empty_mask_fails() {
        assert!(matches!(
            hull_of_mask(&BinaryMask::empty(2, 2)),
            Err(Error::InvalidReference(_))
        ));
    }

    #[test]
    fn convex_iou_cases() {
        let sq = square(0., 0., 2.);
        assert_eq!(convex_iou(&sq, &sq), 1.0);
        assert_eq!(convex_iou(&sq, &square(5., 5., 1.)), 0.0);
        let tri = ConvexPolygon::new(vec![p(0., 0.), p(2., 0.), p(0., 2.)]).unwrap();
        assert!((convex_iou(&tri, &sq) - 0.5).abs() < 1e-12);
        assert!((convex_iou(&sq, &tri) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn box_polygon_iou_of_degenerate_box_is_zero() {
        let b = BBox::new(1., 1., 1., 3.).unwrap();
        assert_eq!(box_polygon_iou(&b, &square(0., 0., 2.)), 0.0);
    }

    #[test]
    fn rasterize_square_and_outside() {
        let m = rasterize_polygon(&square(0., 0., 2.), 2, 2);
        assert_eq!(m.area(), 4);
        let m = rasterize_polygon(&square(10., 10., 2.), 4, 4);
        assert!(m.is_empty());
    }

    #[test]
    fn rasterize_triangle_matches_center_rule() {
        let tri = ConvexPolygon::new(vec![p(0., 0.), p(4., 0.), p(0., 4.)]).unwrap();
        let m = rasterize_polygon(&tri, 4, 4);
        for y in 0..4u32 {
            for x in 0..4u32 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                assert_eq!(m.contains_pixel(x, y), cx + cy <= 4.0, "pixel ({x},{y})");
            }
        }
        assert_eq!(m.area(), 10);
    }

    #[test]
    fn rasterize_concave_polygon() {
        // U shape: 6 wide, 4 tall with a 2-wide notch from the top
        let u = [p(0., 0.), p(2., 0.), p(2., 2.), p(4., 2.), p(4., 0.), p(6., 0.), p(6., 4.), p(0., 4.)];
        let m = rasterize_vertices(&u, 6, 4);
        assert_eq!(m.area(), 24 - 4);
        assert!(!m.contains_pixel(2, 0));
        assert!(!m.contains_pixel(3, 1));
        assert!(m.contains_pixel(3, 2));
    }

    #[test]
    fn polygon_containment_boundary_inclusive() {
        let tri = ConvexPolygon::new(vec![p(0., 0.), p(4., 0.), p(0., 4.)]).unwrap();
        assert!(tri.contains(p(2., 2.)));
        assert!(tri.contains(p(0., 0.)));
        assert!(!tri.contains(p(2.1, 2.)));
        assert!(!tri.contains(p(-0.1, 1.)));
    }
}
