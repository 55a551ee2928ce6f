//! Independent reference implementations and random instance generators.
//!
//! Nothing here calls into the library's geometry or metric code; the oracles
//! work from raw pixel sets, raw coordinates and explicit enumeration.
#![allow(dead_code)]

use detval_core::data_io::{Dataset, ImageRecord, ReferenceInstance, ScoredPrediction};
use detval_core::geometry::{BBox, BinaryMask, Point};
use rand::Rng;

// ---------------------------------------------------------------- generators

pub fn rand_box<R: Rng>(rng: &mut R, lim: f64, min_side: f64, max_side: f64) -> BBox {
    let w = rng.gen_range(min_side..max_side);
    let h = rng.gen_range(min_side..max_side);
    let x = rng.gen_range(0.0..(lim - w));
    let y = rng.gen_range(0.0..(lim - h));
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// Integer-aligned box inside a `lim`×`lim` grid.
pub fn rand_int_box<R: Rng>(rng: &mut R, lim: u32) -> BBox {
    let x0 = rng.gen_range(0..lim - 1);
    let y0 = rng.gen_range(0..lim - 1);
    let x1 = rng.gen_range(x0 + 1..=lim);
    let y1 = rng.gen_range(y0 + 1..=lim);
    BBox::new(x0.into(), y0.into(), x1.into(), y1.into()).unwrap()
}

/// Random nonempty mask: solid rectangle, disc/ellipse, notched blob or scattered pixels.
pub fn rand_mask<R: Rng>(rng: &mut R, w: u32, h: u32) -> BinaryMask {
    loop {
        let m = match rng.gen_range(0..4) {
            0 => {
                let x0 = rng.gen_range(0..w);
                let y0 = rng.gen_range(0..h);
                let x1 = rng.gen_range(x0..w);
                let y1 = rng.gen_range(y0..h);
                BinaryMask::from_fn(w, h, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1)
            }
            1 => {
                let cx = rng.gen_range(0.0..f64::from(w));
                let cy = rng.gen_range(0.0..f64::from(h));
                let rx = rng.gen_range(0.7..f64::from(w) / 2.0 + 1.0);
                let ry = rng.gen_range(0.7..f64::from(h) / 2.0 + 1.0);
                BinaryMask::from_fn(w, h, |x, y| {
                    let dx = (f64::from(x) + 0.5 - cx) / rx;
                    let dy = (f64::from(y) + 0.5 - cy) / ry;
                    dx * dx + dy * dy <= 1.0
                })
            }
            2 => {
                let cx = rng.gen_range(0.0..f64::from(w));
                let cy = rng.gen_range(0.0..f64::from(h));
                let r = rng.gen_range(1.0..f64::from(w.min(h)) / 2.0 + 1.5);
                let nx = rng.gen_range(0.0..f64::from(w));
                let ny = rng.gen_range(0.0..f64::from(h));
                let nr = rng.gen_range(0.5..r);
                BinaryMask::from_fn(w, h, |x, y| {
                    let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                    (px - cx).hypot(py - cy) <= r && (px - nx).hypot(py - ny) > nr
                })
            }
            _ => {
                let p = rng.gen_range(0.02..0.5);
                BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(p))
            }
        };
        if !m.is_empty() {
            return m;
        }
    }
}

/// Vertices in convex position: sorted random angles on an ellipse.
pub fn rand_convex_vertices<R: Rng>(rng: &mut R, lim: f64) -> Vec<Point> {
    let n = rng.gen_range(3..9);
    let rx = rng.gen_range(2.0..lim / 3.0);
    let ry = rng.gen_range(2.0..lim / 3.0);
    let cx = rng.gen_range(rx..lim - rx);
    let cy = rng.gen_range(ry..lim - ry);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 0.2);
    if angles.len() < 3 {
        angles = vec![0.0, 2.1, 4.2];
    }
    angles
        .iter()
        .map(|a| Point::new(cx + rx * a.cos(), cy + ry * a.sin()))
        .collect()
}

// ------------------------------------------------------------ fine-grid areas

/// Counts sample points (cell midpoints of a `1/k` grid) over `bounds` that
/// fall in `a`, in `b` and in both.
fn grid_counts(
    bounds: [f64; 4],
    k: f64,
    a: impl Fn(f64, f64) -> bool,
    b: impl Fn(f64, f64) -> bool,
) -> (u64, u64, u64) {
    let step = 1.0 / k;
    let (mut na, mut nb, mut nab) = (0, 0, 0);
    let nx = ((bounds[2] - bounds[0]) * k).ceil() as u64;
    let ny = ((bounds[3] - bounds[1]) * k).ceil() as u64;
    for j in 0..ny {
        let y = bounds[1] + (j as f64 + 0.5) * step;
        for i in 0..nx {
            let x = bounds[0] + (i as f64 + 0.5) * step;
            let (ia, ib) = (a(x, y), b(x, y));
            na += u64::from(ia);
            nb += u64::from(ib);
            nab += u64::from(ia && ib);
        }
    }
    (na, nb, nab)
}

fn grid_iou(bounds: [f64; 4], k: f64, a: impl Fn(f64, f64) -> bool, b: impl Fn(f64, f64) -> bool) -> f64 {
    let (na, nb, nab) = grid_counts(bounds, k, a, b);
    let union = na + nb - nab;
    if union == 0 {
        0.0
    } else {
        nab as f64 / union as f64
    }
}

fn in_box(b: [f64; 4]) -> impl Fn(f64, f64) -> bool {
    move |x, y| x >= b[0] && x <= b[2] && y >= b[1] && y <= b[3]
}

fn union_bounds(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]
}

pub fn grid_box_iou(a: &BBox, b: &BBox, k: f64) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    grid_iou(union_bounds(a, b), k, in_box(a), in_box(b))
}

/// Point-in-convex-polygon by the sign of every edge cross product.
pub fn in_convex(vs: &[Point], x: f64, y: f64) -> bool {
    let n = vs.len();
    let mut pos = false;
    let mut neg = false;
    for i in 0..n {
        let (a, b) = (vs[i], vs[(i + 1) % n]);
        let c = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        pos |= c > 0.0;
        neg |= c < 0.0;
    }
    !(pos && neg)
}

fn bounds_of(vs: &[Point]) -> [f64; 4] {
    vs.iter().fold([f64::MAX, f64::MAX, f64::MIN, f64::MIN], |b, p| {
        [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)]
    })
}

/// Horizontal extent of a convex polygon at height `y`.
fn convex_row(vs: &[Point], y: f64) -> Option<(f64, f64)> {
    let n = vs.len();
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for i in 0..n {
        let (a, b) = (vs[i], vs[(i + 1) % n]);
        if (a.y <= y && y <= b.y) || (b.y <= y && y <= a.y) {
            let x = if a.y == b.y { a.x.min(b.x) } else { a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x) };
            let x2 = if a.y == b.y { a.x.max(b.x) } else { x };
            lo = lo.min(x);
            hi = hi.max(x2);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Same sampling as `grid_counts`, but whole rows at a time for shapes whose
/// rows are single intervals.
fn grid_iou_rows(
    bounds: [f64; 4],
    k: f64,
    a: impl Fn(f64) -> Option<(f64, f64)>,
    b: impl Fn(f64) -> Option<(f64, f64)>,
) -> f64 {
    let step = 1.0 / k;
    let nx = ((bounds[2] - bounds[0]) * k).ceil() as i64;
    let ny = ((bounds[3] - bounds[1]) * k).ceil() as i64;
    // samples i with lo <= x0 + (i + 0.5) / k <= hi
    let count = |iv: Option<(f64, f64)>| -> (i64, i64) {
        match iv {
            None => (0, -1),
            Some((lo, hi)) => {
                let first = (((lo - bounds[0]) * k - 0.5).ceil() as i64).max(0);
                let last = (((hi - bounds[0]) * k - 0.5).floor() as i64).min(nx - 1);
                (first, last)
            }
        }
    };
    let (mut na, mut nb, mut nab) = (0i64, 0i64, 0i64);
    for j in 0..ny {
        let y = bounds[1] + (j as f64 + 0.5) * step;
        let (a0, a1) = count(a(y));
        let (b0, b1) = count(b(y));
        na += (a1 - a0 + 1).max(0);
        nb += (b1 - b0 + 1).max(0);
        nab += (a1.min(b1) - a0.max(b0) + 1).max(0);
    }
    let union = na + nb - nab;
    if union == 0 {
        0.0
    } else {
        nab as f64 / union as f64
    }
}

fn box_row(b: [f64; 4]) -> impl Fn(f64) -> Option<(f64, f64)> {
    move |y| (y >= b[1] && y <= b[3]).then_some((b[0], b[2]))
}

pub fn grid_convex_iou(a: &[Point], b: &[Point], k: f64) -> f64 {
    grid_iou_rows(union_bounds(bounds_of(a), bounds_of(b)), k, |y| convex_row(a, y), |y| convex_row(b, y))
}

pub fn grid_box_polygon_iou(a: &BBox, b: &[Point], k: f64) -> f64 {
    let ab = a.to_array();
    grid_iou_rows(union_bounds(ab, bounds_of(b)), k, box_row(ab), |y| convex_row(b, y))
}

/// Continuous IoU of a box with a mask's union of unit pixel squares.
pub fn grid_mask_iou(a: &BBox, m: &BinaryMask, k: f64) -> f64 {
    let ab = a.to_array();
    let mb = [0.0, 0.0, f64::from(m.width()), f64::from(m.height())];
    grid_iou(union_bounds(ab, mb), k, in_box(ab), |x, y| {
        x >= 0.0
            && y >= 0.0
            && (x as u32) < m.width()
            && (y as u32) < m.height()
            && m.contains_pixel(x as u32, y as u32)
    })
}

/// Pixel IoU under the pixel-center rule, by checking every pixel.
pub fn pixel_mask_iou(a: &BBox, m: &BinaryMask) -> f64 {
    let fg: std::collections::HashSet<(u32, u32)> = m.pixels().collect();
    let (mut np, mut inter) = (0u64, 0u64);
    for y in 0..m.height() {
        for x in 0..m.width() {
            let (cx, cy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            if cx >= a.x_min() && cx <= a.x_max() && cy >= a.y_min() && cy <= a.y_max() {
                np += 1;
                inter += u64::from(fg.contains(&(x, y)));
            }
        }
    }
    inter as f64 / (np + fg.len() as u64 - inter) as f64
}

// --------------------------------------------------------------------- hulls

/// Gift-wrapping (Jarvis march) over all pixel corners. Returns the hull
/// counter-clockwise without collinear points, starting at the
/// lexicographically smallest vertex.
pub fn gift_wrap_hull(m: &BinaryMask) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = m
        .pixels()
        .flat_map(|(x, y)| {
            let (x, y) = (i64::from(x), i64::from(y));
            [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]
        })
        .collect();
    pts.sort_unstable();
    pts.dedup();
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let d2 = |a: (i64, i64), b: (i64, i64)| (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2);
    let start = pts[0];
    let mut hull = vec![start];
    let mut cur = start;
    loop {
        // next = the point with every other point on its left (farthest on ties)
        let mut next = if pts[0] == cur { pts[1] } else { pts[0] };
        for &p in &pts {
            if p == cur {
                continue;
            }
            let c = cross(cur, next, p);
            if c < 0 || (c == 0 && d2(cur, p) > d2(cur, next)) {
                next = p;
            }
        }
        if next == start {
            break;
        }
        hull.push(next);
        cur = next;
    }
    hull
}

// ------------------------------------------------------------------ matching

fn raw_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = a[2].min(b[2]) - a[0].max(b[0]);
    let h = a[3].min(b[3]) - a[1].max(b[1]);
    let inter = if w > 0.0 && h > 0.0 { w * h } else { 0.0 };
    let area = |v: [f64; 4]| (v[2] - v[0]) * (v[3] - v[1]);
    inter / (area(a) + area(b) - inter)
}

/// Tight box of a mask from its pixel list.
pub fn pixel_tight_box(m: &BinaryMask) -> [f64; 4] {
    let mut b = [f64::MAX, f64::MAX, f64::MIN, f64::MIN];
    for (x, y) in m.pixels() {
        let (x, y) = (f64::from(x), f64::from(y));
        b = [b[0].min(x), b[1].min(y), b[2].max(x + 1.0), b[3].max(y + 1.0)];
    }
    b
}

/// Exhaustive maximum matching over a hit matrix: most pairs, then highest
/// total score. Returns (pairs, total score).
pub fn brute_max_matching(hit: &[Vec<Option<f64>>]) -> (usize, f64) {
    fn go(i: usize, hit: &[Vec<Option<f64>>], used: &mut Vec<bool>) -> (usize, f64) {
        if i == hit.len() {
            return (0, 0.0);
        }
        let mut best = go(i + 1, hit, used);
        for (j, h) in hit[i].iter().enumerate() {
            if let (Some(q), false) = (h, used[j]) {
                used[j] = true;
                let (n, s) = go(i + 1, hit, used);
                used[j] = false;
                let cand = (n + 1, s + q);
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1) {
                    best = cand;
                }
            }
        }
        best
    }
    let n_refs = hit.first().map_or(0, Vec::len);
    go(0, hit, &mut vec![false; n_refs])
}

// ------------------------------------------------------------ AP instances

#[derive(Debug, Clone)]
pub struct ImageInstance {
    pub refs: Vec<BinaryMask>,
    pub preds: Vec<(BBox, f64)>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub size: u32,
    pub images: Vec<ImageInstance>,
}

/// Rectangular-or-blobby references with jittered detections and clutter.
pub fn rand_instance<R: Rng>(rng: &mut R, n_images: usize, max_preds: usize) -> Instance {
    let size = 64u32;
    let mut budget = max_preds;
    let mut images = Vec::new();
    for _ in 0..n_images {
        let n_refs = rng.gen_range(0..=3);
        let refs: Vec<BinaryMask> = (0..n_refs)
            .map(|_| {
                let w = rng.gen_range(3..24);
                let h = rng.gen_range(3..24);
                let x0 = rng.gen_range(0..size - w);
                let y0 = rng.gen_range(0..size - h);
                if rng.gen_bool(0.5) {
                    BinaryMask::from_fn(size, size, |x, y| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h)
                } else {
                    let (cx, cy) = (f64::from(x0) + f64::from(w) / 2.0, f64::from(y0) + f64::from(h) / 2.0);
                    let (rx, ry) = (f64::from(w) / 2.0, f64::from(h) / 2.0);
                    BinaryMask::from_fn(size, size, |x, y| {
                        let dx = (f64::from(x) + 0.5 - cx) / rx;
                        let dy = (f64::from(y) + 0.5 - cy) / ry;
                        dx * dx + dy * dy <= 1.0
                    })
                }
            })
            .filter(|m| !m.is_empty())
            .collect();
        let mut preds = Vec::new();
        for m in &refs {
            let tb = pixel_tight_box(m);
            for _ in 0..rng.gen_range(0..=2) {
                if budget == 0 {
                    break;
                }
                let (w, h) = (tb[2] - tb[0], tb[3] - tb[1]);
                let j = rng.gen_range(0.0..0.5);
                let dx = rng.gen_range(-j..j) * w;
                let dy = rng.gen_range(-j..j) * h;
                let sx = 1.0 + rng.gen_range(-j..j);
                let sy = 1.0 + rng.gen_range(-j..j);
                let (cx, cy) = ((tb[0] + tb[2]) / 2.0 + dx, (tb[1] + tb[3]) / 2.0 + dy);
                let (hw, hh) = (w * sx / 2.0, h * sy / 2.0);
                let b = BBox::new(cx - hw, cy - hh, cx + hw, cy + hh).unwrap();
                preds.push((b, rng.gen_range(0.0..1.0)));
                budget -= 1;
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            if budget == 0 {
                break;
            }
            preds.push((rand_box(rng, f64::from(size), 2.0, 20.0), rng.gen_range(0.0..1.0)));
            budget -= 1;
        }
        images.push(ImageInstance { refs, preds });
    }
    Instance { size, images }
}

impl Instance {
    pub fn to_dataset(&self) -> (Dataset, Vec<ScoredPrediction>) {
        let mut records = Vec::new();
        let mut refs = Vec::new();
        let mut preds = Vec::new();
        for (i, img) in self.images.iter().enumerate() {
            let id = format!("im{i}");
            records.push(ImageRecord {
                image_id: id.clone(),
                width: self.size,
                height: self.size,
                center_id: format!("c{}", i % 3),
                patient_id: String::new(),
                sequence_id: String::new(),
            });
            for (j, m) in img.refs.iter().enumerate() {
                refs.push(ReferenceInstance::new(format!("{id}-r{j}"), id.clone(), m.clone(), None).unwrap());
            }
            for (k, (b, c)) in img.preds.iter().enumerate() {
                preds.push(ScoredPrediction {
                    prediction_id: format!("{id}-p{k}"),
                    image_id: id.clone(),
                    bbox: *b,
                    confidence: *c,
                });
            }
        }
        (Dataset::new(records, refs).unwrap(), preds)
    }

    pub fn total_refs(&self) -> usize {
        self.images.iter().map(|i| i.refs.len()).sum()
    }
}

/// Brute-force AP at box IoU ≥ `tau`: greedy per image by confidence, one
/// dataset-wide ranked list, then the 101-point interpolated mean computed by
/// scanning every prefix for every recall level. `None` without references.
pub fn brute_force_ap(inst: &Instance, tau: f64) -> Option<f64> {
    let total = inst.total_refs();
    if total == 0 {
        return None;
    }
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    for img in &inst.images {
        let boxes: Vec<[f64; 4]> = img.refs.iter().map(pixel_tight_box).collect();
        let mut order: Vec<usize> = (0..img.preds.len()).collect();
        order.sort_by(|&a, &b| img.preds[b].1.total_cmp(&img.preds[a].1));
        let mut taken = vec![false; boxes.len()];
        for i in order {
            let p = img.preds[i].0.to_array();
            let mut best: Option<(usize, f64)> = None;
            for (j, r) in boxes.iter().enumerate() {
                let iou = raw_iou(p, *r);
                if !taken[j] && iou >= tau && best.is_none_or(|(_, q)| iou > q) {
                    best = Some((j, iou));
                }
            }
            if let Some((j, _)) = best {
                taken[j] = true;
            }
            ranked.push((img.preds[i].1, best.is_some()));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut prefixes = Vec::new();
    let mut tp = 0usize;
    for (k, &(_, hit)) in ranked.iter().enumerate() {
        tp += usize::from(hit);
        prefixes.push((tp as f64 / total as f64, tp as f64 / (k + 1) as f64));
    }
    let mut sum = 0.0;
    for level in 0..=100 {
        let r = level as f64 / 100.0;
        let best = prefixes
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
        sum += best;
    }
    Some(sum / 101.0)
}
