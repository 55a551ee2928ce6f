mod oracles;

use detval_core::metrics::{
    ap_at, ap_per_threshold, average_precision, counting_metric, pr_curve, APConfig, ConfusionCounts,
    CountingMetric, PrPoint, PRCurve, RankedDetection,
};
use detval_core::{CriterionKind, CriterionSpec, EvalSet};
use oracles::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn curve(points: &[(f64, f64)], total: u64) -> PRCurve {
    PRCurve {
        points: points.iter().map(|&(recall, precision)| PrPoint { recall, precision }).collect(),
        total_references: total,
    }
}

#[test]
fn hand_derived_ap_values() {
    let cfg = APConfig::default();
    assert_eq!(average_precision(&curve(&[(1.0, 1.0)], 1), &cfg), 1.0);
    assert_eq!(average_precision(&curve(&[(0.0, 0.0), (1.0, 0.5)], 1), &cfg), 0.5);
    assert_eq!(average_precision(&curve(&[(0.5, 1.0)], 2), &cfg), 51.0 / 101.0);
}

#[test]
fn hand_derived_curves() {
    let c = pr_curve(&[RankedDetection::new(0.9, f64::NEG_INFINITY, false), RankedDetection::new(0.8, 1.0, true)], 1).unwrap();
    assert_eq!(c.points, curve(&[(0.0, 0.0), (1.0, 0.5)], 1).points);
    let c = pr_curve(&[RankedDetection::new(0.9, 1.0, true)], 2).unwrap();
    assert_eq!(c.points, curve(&[(0.5, 1.0)], 2).points);
    assert!(pr_curve(&[], 0).is_err());
}

#[test]
fn counting_examples() {
    let c = ConfusionCounts::new(3, 1, 1);
    assert_eq!(counting_metric(&c, CountingMetric::Sensitivity).unwrap(), 0.75);
    assert_eq!(counting_metric(&c, CountingMetric::Ppv).unwrap(), 0.75);
    assert_eq!(counting_metric(&c, CountingMetric::FBeta(1.0)).unwrap(), 0.75);
    // P = 0.5, R = 1
    let c = ConfusionCounts::new(1, 1, 0);
    assert!((counting_metric(&c, CountingMetric::FBeta(2.0)).unwrap() - 2.5 / 3.0).abs() < 1e-15);
    assert!(counting_metric(&ConfusionCounts::new(0, 0, 0), CountingMetric::Sensitivity).is_err());
    assert!(counting_metric(&ConfusionCounts::new(0, 0, 4), CountingMetric::Ppv).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ap_matches_brute_force(seed in any::<u64>(), tau in prop::sample::select(vec![0.1, 0.3, 0.5, 0.75])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_images = rng.gen_range(1..=12);
        let inst = rand_instance(&mut rng, n_images, 30);
        let (ds, preds) = inst.to_dataset();
        let set = EvalSet::new(&ds, &preds).unwrap();
        let spec = CriterionSpec::overlap(CriterionKind::BoxIou, tau);
        match brute_force_ap(&inst, tau) {
            None => prop_assert!(ap_at(&set, &spec).is_err()),
            Some(want) => prop_assert!((ap_at(&set, &spec).unwrap() - want).abs() <= 1e-12),
        }
    }

    #[test]
    fn ap_is_non_increasing_in_tau(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = rand_instance(&mut rng, 10, 30);
        prop_assume!(inst.total_refs() > 0);
        let (ds, preds) = inst.to_dataset();
        let set = EvalSet::new(&ds, &preds).unwrap();
        let grid = APConfig::range(0.05, 0.05, 0.95).unwrap();
        prop_assert_eq!(grid.tau_grid.len(), 19);
        for kind in [CriterionKind::BoxIou, CriterionKind::MaskIou, CriterionKind::HullIou] {
            let aps = ap_per_threshold(&set, &CriterionSpec::overlap(kind, 0.5), &grid).unwrap();
            for w in aps.windows(2) {
                prop_assert!(w[1] <= w[0], "{kind}: {aps:?}");
            }
        }
    }

    #[test]
    fn monotone_confidence_map_keeps_ap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = rand_instance(&mut rng, 8, 30);
        prop_assume!(inst.total_refs() > 0);
        let (ds, preds) = inst.to_dataset();
        let squashed: Vec<_> = preds
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.confidence = p.confidence.powi(3) * 0.5;
                q
            })
            .collect();
        let spec = CriterionSpec::overlap(CriterionKind::MaskIou, 0.4);
        let a = ap_at(&EvalSet::new(&ds, &preds).unwrap(), &spec).unwrap();
        let b = ap_at(&EvalSet::new(&ds, &squashed).unwrap(), &spec).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn one_pass_flags_equal_rematching_per_cutoff(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = rand_instance(&mut rng, 6, 20);
        let (ds, preds) = inst.to_dataset();
        let set = EvalSet::new(&ds, &preds).unwrap();
        for spec in [CriterionSpec::overlap(CriterionKind::BoxIou, 0.5), CriterionSpec::point(CriterionKind::PointInMask)] {
            let ranked = set.ranked_detections(&spec).unwrap();
            for p in &preds {
                let c = p.confidence;
                let tp_once = ranked.iter().filter(|d| d.confidence >= c && d.tp).count() as u64;
                let fp_once = ranked.iter().filter(|d| d.confidence >= c && !d.tp).count() as u64;
                let counts = set.with_min_confidence(c).confusion(&spec).unwrap();
                prop_assert_eq!((counts.tp, counts.fp), (tp_once, fp_once));
            }
        }
    }

    #[test]
    fn f_beta_between_precision_and_recall(tp in 1u64..50, fp in 0u64..50, fn_ in 0u64..50, beta in 0.1f64..4.0) {
        let c = ConfusionCounts::new(tp, fp, fn_);
        let p = counting_metric(&c, CountingMetric::Ppv).unwrap();
        let r = counting_metric(&c, CountingMetric::Sensitivity).unwrap();
        let f = counting_metric(&c, CountingMetric::FBeta(beta)).unwrap();
        prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
        let swapped = counting_metric(&ConfusionCounts::new(tp, fn_, fp), CountingMetric::FBeta(1.0)).unwrap();
        prop_assert!((counting_metric(&c, CountingMetric::FBeta(1.0)).unwrap() - swapped).abs() < 1e-12);
    }

    #[test]
    fn curve_recall_is_monotone(flags in prop::collection::vec((0.0f64..1.0, any::<bool>()), 0..40), extra in 0u64..5) {
        let n_tp = flags.iter().filter(|f| f.1).count() as u64;
        prop_assume!(n_tp + extra > 0);
        let dets: Vec<_> = flags.iter().map(|&(c, t)| RankedDetection::new(c, if t { 1.0 } else { f64::NEG_INFINITY }, t)).collect();
        let c = pr_curve(&dets, n_tp + extra).unwrap();
        for w in c.points.windows(2) {
            prop_assert!(w[1].recall >= w[0].recall);
        }
        for p in &c.points {
            prop_assert!((0.0..=1.0).contains(&p.recall) && (0.0..=1.0).contains(&p.precision));
        }
        let ap = average_precision(&c, &APConfig::default());
        prop_assert!((0.0..=1.0).contains(&ap));
    }
}

#[test]
fn perfect_and_empty_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inst = rand_instance(&mut rng, 10, 0);
    for img in &mut inst.images {
        img.preds = img
            .refs
            .iter()
            .map(|m| (m.tight_box().unwrap(), rng.gen_range(0.0..1.0)))
            .collect();
    }
    assert!(inst.total_refs() > 0);
    let (ds, preds) = inst.to_dataset();
    let set = EvalSet::new(&ds, &preds).unwrap();
    let grid = APConfig::range(0.5, 0.05, 0.95).unwrap();
    let spec = CriterionSpec::overlap(CriterionKind::BoxIou, 0.5);
    assert_eq!(ap_at(&set, &spec).unwrap(), 1.0);
    assert!(ap_per_threshold(&set, &spec, &grid).unwrap().iter().all(|&a| a == 1.0));
    assert_eq!(ap_at(&set, &CriterionSpec::point(CriterionKind::PointInMask)).unwrap(), 1.0);
    let none: Vec<_> = Vec::new();
    let empty = EvalSet::new(&ds, &none).unwrap();
    assert_eq!(ap_at(&empty, &CriterionSpec::overlap(CriterionKind::BoxIou, 0.5)).unwrap(), 0.0);
}
