//! Seeded synthetic multi-center data: reference masks of mixed size and
//! shape, a noisy detector, and simulated usefulness ratings.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{
    write_dataset, write_predictions, write_ratings, Dataset, ImageRecord, Rating, RatingRecord, ReferenceInstance,
    ScoredPrediction,
};
use crate::error::{Error, Result};
use crate::geometry::{point_in, BBox, BinaryMask};

/// Detector imperfections. All zero gives a perfect detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Maximum coordinate jitter as a fraction of the reference box size.
    pub box_jitter: f64,
    /// Probability that a reference is not detected.
    pub miss_rate: f64,
    /// Expected false positives per image.
    pub false_positives_per_image: f64,
    /// Noise multiplier spread across centers: center k of n scales the
    /// noise by `1 + center_spread * (2k/(n-1) - 1)`.
    pub center_spread: f64,
    /// Probability that a simulated rater flips the position-based verdict.
    pub rating_flip: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            box_jitter: 0.25,
            miss_rate: 0.1,
            false_positives_per_image: 0.3,
            center_spread: 0.5,
            rating_flip: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            box_jitter: 0.0,
            miss_rate: 0.0,
            false_positives_per_image: 0.0,
            center_spread: 0.0,
            rating_flip: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_images: usize,
    pub n_centers: usize,
    pub width: u32,
    pub height: u32,
    /// Relative weights of small, medium and large references.
    pub size_mix: [f64; 3],
    /// Area bounds used to draw sizes: small up to the first, medium up to the second.
    pub size_bounds: [f64; 2],
    /// Fraction of references that are axis-aligned rectangles (fill their box).
    pub rectangular_fraction: f64,
    /// Among the other references: probability of a convex ellipse rather
    /// than a notched, non-convex one.
    pub shape_convexity: f64,
    pub max_refs_per_image: usize,
    /// Probability that an image has no reference.
    pub empty_image_fraction: f64,
    pub noise: NoiseModel,
    /// Independent detector runs, for ensemble fusion experiments.
    pub n_models: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 60,
            n_centers: 6,
            width: 320,
            height: 256,
            size_mix: [1.0, 1.0, 1.0],
            size_bounds: [32.0 * 32.0, 96.0 * 96.0],
            rectangular_fraction: 0.3,
            shape_convexity: 0.6,
            max_refs_per_image: 2,
            empty_image_fraction: 0.1,
            noise: NoiseModel::default(),
            n_models: 1,
        }
    }
}

impl SynthConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
    pub fn validate(&self) -> Result<()> {
        let p01 = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        if self.n_images == 0 || self.n_centers == 0 || self.n_centers > self.n_images {
            return Err(Error::config("need 0 < n_centers <= n_images"));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::config("synthetic images must be at least 64x64"));
        }
        if self.size_mix.iter().any(|w| !(*w >= 0.0)) || self.size_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("size_mix needs nonnegative weights with a positive sum"));
        }
        if !(16.0 < self.size_bounds[0] && self.size_bounds[0] < self.size_bounds[1]) {
            return Err(Error::config("size_bounds must satisfy 16 < small < medium"));
        }
        if self.max_refs_per_image == 0 || self.n_models == 0 {
            return Err(Error::config("max_refs_per_image and n_models must be positive"));
        }
        p01("rectangular_fraction", self.rectangular_fraction)?;
        p01("shape_convexity", self.shape_convexity)?;
        p01("empty_image_fraction", self.empty_image_fraction)?;
        p01("miss_rate", self.noise.miss_rate)?;
        p01("rating_flip", self.noise.rating_flip)?;
        if !(self.noise.box_jitter >= 0.0) || !(self.noise.false_positives_per_image >= 0.0) {
            return Err(Error::config("noise magnitudes must be nonnegative"));
        }
        p01("center_spread", self.noise.center_spread)
    }

    fn center_of(&self, image: usize) -> usize {
        image * self.n_centers / self.n_images
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Output of detector run 0.
    pub predictions: Vec<ScoredPrediction>,
    /// One prediction list per detector run (`predictions` is the first).
    pub model_predictions: Vec<Vec<ScoredPrediction>>,
    /// One rating per prediction of run 0.
    pub ratings: Vec<RatingRecord>,
}

impl SyntheticData {
    /// Writes `dataset.json`, `predictions.json`, `ratings.csv` and, for
    /// several runs, `model_<k>.json`. Returns the paths written.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut out = vec![dir.join("dataset.json"), dir.join("predictions.json"), dir.join("ratings.csv")];
        write_dataset(&self.dataset, &out[0])?;
        write_predictions(&self.predictions, &out[1])?;
        write_ratings(&self.ratings, &out[2])?;
        if self.model_predictions.len() > 1 {
            for (k, preds) in self.model_predictions.iter().enumerate() {
                let p = dir.join(format!("model_{k}.json"));
                write_predictions(preds, &p)?;
                out.push(p);
            }
        }
        Ok(out)
    }
}

fn pick_bucket(rng: &mut ChaCha8Rng, mix: &[f64; 3]) -> usize {
    let total: f64 = mix.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in mix.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    mix.iter().rposition(|w| *w > 0.0).unwrap_or(2)
}

#[derive(Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
    Notched,
}

/// Draws a mask with a target area inside `[x0, x1) × [y0, y1)`.
fn draw_mask(rng: &mut ChaCha8Rng, cfg: &SynthConfig, taken: &[BBox]) -> Option<BinaryMask> {
    let (w, h) = (cfg.width, cfg.height);
    let bucket = pick_bucket(rng, &cfg.size_mix);
    let max_area = 0.25 * f64::from(w) * f64::from(h);
    let (lo, hi) = match bucket {
        0 => (30.0, cfg.size_bounds[0]),
        1 => (cfg.size_bounds[0], cfg.size_bounds[1]),
        _ => (cfg.size_bounds[1], (cfg.size_bounds[1] * 3.0).min(max_area)),
    };
    let shape = if rng.gen::<f64>() < cfg.rectangular_fraction {
        Shape::Rect
    } else if rng.gen::<f64>() < cfg.shape_convexity {
        Shape::Ellipse
    } else {
        Shape::Notched
    };
    // target area strictly inside the bucket, leaving room for rasterization
    let area = lo + (hi - lo) * rng.gen_range(0.15..0.85);
    let aspect: f64 = rng.gen_range(0.6..1.6);
    // box dimensions; ellipses cover pi/4 of their box, notched ones about 0.6
    let fill = match shape {
        Shape::Rect => 1.0,
        Shape::Ellipse => std::f64::consts::FRAC_PI_4,
        Shape::Notched => 0.62,
    };
    let bw = ((area / fill * aspect).sqrt().round() as u32).clamp(4, w - 2);
    let bh = ((area / fill / aspect).sqrt().round() as u32).clamp(4, h - 2);
    for _ in 0..40 {
        let x0 = rng.gen_range(0..=w - bw);
        let y0 = rng.gen_range(0..=h - bh);
        let b = BBox::new(f64::from(x0), f64::from(y0), f64::from(x0 + bw), f64::from(y0 + bh)).ok()?;
        // keep a 2 px gap to earlier references
        let grown = BBox::new(b.x_min() - 2.0, b.y_min() - 2.0, b.x_max() + 2.0, b.y_max() + 2.0).ok()?;
        if taken.iter().any(|t| t.intersection_area(&grown) > 0.0) {
            continue;
        }
        let (cx, cy) = (f64::from(x0) + f64::from(bw) / 2.0, f64::from(y0) + f64::from(bh) / 2.0);
        let (a, bb) = (f64::from(bw) / 2.0, f64::from(bh) / 2.0);
        let in_ellipse = |px: f64, py: f64| ((px - cx) / a).powi(2) + ((py - cy) / bb).powi(2) <= 1.0;
        let mask = match shape {
            Shape::Rect => BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh),
            Shape::Ellipse => BinaryMask::from_fn(w, h, |x, y| in_ellipse(f64::from(x) + 0.5, f64::from(y) + 0.5)),
            Shape::Notched => {
                // a bite out of the right flank, reaching past the center
                let (nx, ny, nr) = (cx + a * 0.75, cy, 0.55 * a.min(bb) + 0.35 * a);
                BinaryMask::from_fn(w, h, |x, y| {
                    let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                    in_ellipse(px, py) && (px - nx).hypot(py - ny) > nr
                })
            }
        };
        if mask.area() >= 9 {
            return Some(mask);
        }
    }
    None
}

fn jittered(rng: &mut ChaCha8Rng, b: &BBox, jitter: f64, w: u32, h: u32) -> BBox {
    let (bw, bh) = (b.width(), b.height());
    let mut d = |s: f64| if jitter > 0.0 { rng.gen_range(-1.0..1.0) * jitter * s } else { 0.0 };
    let x0 = b.x_min() + d(bw);
    let y0 = b.y_min() + d(bh);
    let x1 = b.x_max() + d(bw);
    let y1 = b.y_max() + d(bh);
    let (x0, x1) = (x0.min(x1 - 1.0), x1.max(x0 + 1.0));
    let (y0, y1) = (y0.min(y1 - 1.0), y1.max(y0 + 1.0));
    BBox::new(x0, y0, x1, y1).expect("ordered").clamp_to(f64::from(w), f64::from(h))
}

fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    let bw = rng.gen_range(8.0..f64::from(w) / 3.0);
    let bh = rng.gen_range(8.0..f64::from(h) / 3.0);
    let x0 = rng.gen_range(0.0..f64::from(w) - bw);
    let y0 = rng.gen_range(0.0..f64::from(h) - bh);
    BBox::new(x0, y0, x0 + bw, y0 + bh).expect("ordered")
}

/// Detector output for one image.
fn detect(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    scale: f64,
    record: &ImageRecord,
    refs: &[ReferenceInstance],
    run: usize,
) -> Vec<ScoredPrediction> {
    let noise = &cfg.noise;
    let mut boxes: Vec<(BBox, f64)> = Vec::new();
    for r in refs {
        if rng.gen::<f64>() < (noise.miss_rate * scale).min(1.0) {
            continue;
        }
        let b = jittered(rng, r.tight_box(), noise.box_jitter * scale, record.width, record.height);
        boxes.push((b, rng.gen_range(0.35..1.0)));
    }
    let fp_rate = noise.false_positives_per_image * scale;
    let mut n_fp = fp_rate.floor() as usize;
    if rng.gen::<f64>() < fp_rate.fract() {
        n_fp += 1;
    }
    for _ in 0..n_fp {
        boxes.push((random_box(rng, record.width, record.height), rng.gen_range(0.02..0.7)));
    }
    let prefix = if cfg.n_models > 1 { format!("m{run}-") } else { String::new() };
    boxes
        .into_iter()
        .enumerate()
        .map(|(k, (bbox, confidence))| ScoredPrediction {
            prediction_id: format!("{prefix}{}-p{k}", record.image_id),
            image_id: record.image_id.clone(),
            bbox,
            confidence,
        })
        .collect()
}

/// Deterministic in `seed`; each image draws from its own random stream.
pub fn generate_synthetic(seed: u64, cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut images = Vec::with_capacity(cfg.n_images);
    let mut refs = Vec::new();
    let mut per_image_refs: Vec<Vec<ReferenceInstance>> = Vec::with_capacity(cfg.n_images);
    for i in 0..cfg.n_images {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let c = cfg.center_of(i);
        let record = ImageRecord {
            image_id: format!("img{i:05}"),
            width: cfg.width,
            height: cfg.height,
            center_id: format!("center{}", c + 1),
            patient_id: format!("center{}-pt{}", c + 1, i / 4),
            sequence_id: format!("center{}-seq{}", c + 1, i / 2),
        };
        let mut mine = Vec::new();
        if rng.gen::<f64>() >= cfg.empty_image_fraction {
            let k = rng.gen_range(1..=cfg.max_refs_per_image);
            let mut taken: Vec<BBox> = Vec::new();
            for j in 0..k {
                let Some(mask) = draw_mask(&mut rng, cfg, &taken) else { continue };
                let polyp_type = Some(if rng.gen::<bool>() {
                    crate::data_io::PolypType::Protruded
                } else {
                    crate::data_io::PolypType::Flat
                });
                let r = ReferenceInstance::new(format!("{}-r{j}", record.image_id), &record.image_id, mask, polyp_type)?;
                taken.push(*r.tight_box());
                mine.push(r);
            }
        }
        refs.extend(mine.iter().cloned());
        per_image_refs.push(mine);
        images.push(record);
    }

    let mut model_predictions = vec![Vec::new(); cfg.n_models];
    let mut ratings = Vec::new();
    for (i, (record, mine)) in images.iter().zip(&per_image_refs).enumerate() {
        let c = cfg.center_of(i);
        let scale = if cfg.n_centers > 1 {
            1.0 + cfg.noise.center_spread * (2.0 * c as f64 / (cfg.n_centers - 1) as f64 - 1.0)
        } else {
            1.0
        };
        for (run, out) in model_predictions.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_0000_0000 ^ (run as u64 + 1));
            rng.set_stream(i as u64);
            let preds = detect(&mut rng, cfg, scale, record, mine, run);
            if run == 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a7e_0000_0000_0000);
                rng.set_stream(i as u64);
                for p in &preds {
                    // raters judge position: is the box center on a polyp?
                    let on_polyp = mine.iter().any(|r| point_in(p.bbox.center(), r.mask()));
                    let flip = rng.gen::<f64>() < cfg.noise.rating_flip;
                    ratings.push(RatingRecord {
                        prediction_id: p.prediction_id.clone(),
                        rating: if on_polyp != flip { Rating::Useful } else { Rating::NotUseful },
                        rater_id: format!("rater{}", i % 3 + 1),
                    });
                }
            }
            out.extend(preds);
        }
    }
    let dataset = Dataset::new(images, refs)?;
    Ok(SyntheticData {
        dataset,
        predictions: model_predictions[0].clone(),
        model_predictions,
        ratings,
    })
}
