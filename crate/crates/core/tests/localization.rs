mod oracles;

use detval_core::data_io::ReferenceInstance;
use detval_core::geometry::{BBox, BinaryMask, CenterMode};
use detval_core::localization::localize;
use detval_core::{CriterionKind, CriterionSpec, TauUnit};
use oracles::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference(m: BinaryMask) -> ReferenceInstance {
    ReferenceInstance::new("r", "i", m, None).unwrap()
}

fn hit(pred: &BBox, r: &ReferenceInstance, spec: CriterionSpec) -> bool {
    localize(pred, r, &spec).unwrap().hit
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn point_criteria_are_nested(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = reference(rand_mask(&mut rng, 16, 16));
        let pred = rand_box(&mut rng, 16.0, 0.5, 10.0);
        let in_mask = hit(&pred, &r, CriterionSpec::point(CriterionKind::PointInMask));
        let in_hull = hit(&pred, &r, CriterionSpec::point(CriterionKind::PointInHull));
        let in_box = hit(&pred, &r, CriterionSpec::point(CriterionKind::PointInBox));
        prop_assert!(!in_mask || in_hull);
        prop_assert!(!in_hull || in_box);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn overlap_hits_are_monotone_in_tau(seed in any::<u64>(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = reference(rand_mask(&mut rng, 16, 16));
        let pred = rand_box(&mut rng, 16.0, 0.5, 10.0);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        for kind in [CriterionKind::BoxIou, CriterionKind::MaskIou, CriterionKind::HullIou] {
            if hit(&pred, &r, CriterionSpec::overlap(kind, hi)) {
                prop_assert!(hit(&pred, &r, CriterionSpec::overlap(kind, lo)));
            }
            let score = localize(&pred, &r, &CriterionSpec::overlap(kind, 0.5)).unwrap().score;
            prop_assert!((0.0..=1.0).contains(&score));
        }
    }

    #[test]
    fn zero_distance_hits_only_on_coincident_centers(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = reference(rand_mask(&mut rng, 16, 16));
        let spec = CriterionSpec::center_distance(0.0, TauUnit::Pixels);
        let tight = *r.tight_box();
        prop_assert!(hit(&tight, &r, spec));
        let c = tight.center();
        let d = rng.gen_range(0.01..2.0);
        let moved = BBox::new(c.x - 1.0 + d, c.y - 1.0, c.x + 1.0 + d, c.y + 1.0).unwrap();
        prop_assert!(!hit(&moved, &r, spec));
    }
}

#[test]
fn strict_any_overlap_excludes_touching_boxes() {
    let r = reference(BinaryMask::from_fn(16, 16, |x, y| x < 4 && y < 4));
    let touching = BBox::new(4.0, 0.0, 8.0, 4.0).unwrap();
    let overlapping = BBox::new(3.0, 0.0, 8.0, 4.0).unwrap();
    let any = CriterionSpec::overlap(CriterionKind::BoxIou, 0.0).strict();
    assert!(!hit(&touching, &r, any));
    assert!(hit(&overlapping, &r, any));
    // non-strict zero threshold accepts everything
    assert!(hit(&touching, &r, CriterionSpec::overlap(CriterionKind::BoxIou, 0.0)));
}

#[test]
fn center_distance_units_and_modes() {
    // L-shaped mask: box center and centroid differ
    let r = reference(BinaryMask::from_fn(100, 100, |x, y| (x < 10 && y < 30) || (y < 10 && x < 30)));
    let pred = BBox::new(0.0, 0.0, 30.0, 30.0).unwrap();
    let bbox_mode = CriterionSpec::center_distance(0.0, TauUnit::Pixels);
    assert!(hit(&pred, &r, bbox_mode));
    let centroid = bbox_mode.with_center_mode(CenterMode::MaskCentroid);
    assert!(!hit(&pred, &r, centroid));
    let d = localize(&pred, &r, &centroid).unwrap().score;
    let frac = d / 100f64.hypot(100.0);
    assert!(hit(&pred, &r, CriterionSpec::center_distance(frac * 1.001, TauUnit::DiagonalFraction).with_center_mode(CenterMode::MaskCentroid)));
    assert!(!hit(&pred, &r, CriterionSpec::center_distance(frac * 0.999, TauUnit::DiagonalFraction).with_center_mode(CenterMode::MaskCentroid)));
}

#[test]
fn criterion_grammar_round_trips() {
    for s in [
        "box_iou:0.5",
        "mask_iou:0:strict",
        "hull_iou:0.75",
        "point_in_mask",
        "point_in_hull",
        "point_in_box",
        "center_distance:0.1:diag",
        "center_distance:12:px",
    ] {
        let spec: CriterionSpec = s.parse().unwrap();
        let again: CriterionSpec = spec.to_string().parse().unwrap();
        assert_eq!(spec, again, "{s}");
    }
    for bad in ["box_iou", "box_iou:1.5", "nope:0.5", "point_in_mask:0.5:px:extra:x", "box_iou:abc"] {
        assert!(bad.parse::<CriterionSpec>().is_err(), "{bad}");
    }
}
