mod common;

use convmcd::metrics::{
    boundary_mf, boundary_scores, default_mf_thresholds, dice_jaccard, evaluate_pair, hausdorff,
    pixel_error, trimap_curve, MetricProtocol, MetricsReport, Prediction,
};
use convmcd::{BinaryMask, Error, ImageGrid};
use proptest::prelude::*;

fn square(side: usize, top: usize, left: usize, n: usize) -> BinaryMask {
    BinaryMask::from_fn(side, side, |r, c| {
        (top..top + n).contains(&r) && (left..left + n).contains(&c)
    })
    .unwrap()
}

/// F-score with matching done by scanning every pixel pair.
fn brute_f(pred: &BinaryMask, gt: &BinaryMask, tol: f64) -> f64 {
    let (pb, gb) = (common::points(&common::boundary(pred)), common::points(&common::boundary(gt)));
    let matched = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        from.iter()
            .filter(|&&p| common::nearest_sq(p, to).is_some_and(|d| (d as f64).sqrt() <= tol))
            .count()
    };
    let p = if pb.is_empty() { 0.0 } else { matched(&pb, &gb) as f64 / pb.len() as f64 };
    let r = if pb.is_empty() { 0.0 } else { matched(&gb, &pb) as f64 / gb.len() as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[test]
fn shifted_square_scores_one_at_tolerance_two() {
    let gt = square(16, 4, 4, 6);
    for (dr, dc) in [(1, 0), (0, 1), (1, 1)] {
        let pred = square(16, 4 + dr, 4 + dc, 6);
        let scores = boundary_scores(&Prediction::Mask(pred.clone()), &gt, 2.0, &[0.5]).unwrap();
        assert_eq!(scores[0].f_score, 1.0);
        assert_eq!(brute_f(&pred, &gt, 2.0), 1.0);
    }
}

#[test]
fn boundary_f_equals_brute_force() {
    for seed in 0..60 {
        let gt = common::random_mask(seed, 24, 24);
        let pred = common::random_mask(seed + 900, 24, 24);
        for tol in [0.0, 1.0, 1.5, 2.0, 4.0] {
            match boundary_scores(&Prediction::Mask(pred.clone()), &gt, tol, &[0.5]) {
                Ok(s) => assert_eq!(s[0].f_score.to_bits(), brute_f(&pred, &gt, tol).to_bits()),
                Err(Error::EmptyBoundary) => assert!(gt.is_empty()),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn perfect_and_empty_predictions() {
    let gt = square(16, 3, 5, 7);
    let perfect = Prediction::Mask(gt.clone());
    assert_eq!(boundary_mf(&perfect, &gt, 2.0, &default_mf_thresholds()).unwrap(), 1.0);
    let zero = Prediction::Probability(ImageGrid::filled(16, 16, 0.0).unwrap());
    assert_eq!(boundary_mf(&zero, &gt, 2.0, &default_mf_thresholds()).unwrap(), 0.0);
    let metrics = evaluate_pair("p", &perfect, &gt, &MetricProtocol::default()).unwrap();
    assert_eq!((metrics.dice, metrics.jaccard, metrics.hd, metrics.mf), (1.0, 1.0, Some(0.0), Some(1.0)));
}

#[test]
fn saturated_trimap_equals_global_error() {
    for seed in 0..40 {
        let gt = common::random_mask(seed, 20, 20);
        if gt.is_empty() {
            continue;
        }
        let pred = Prediction::Mask(common::random_mask(seed + 1, 20, 20));
        let curve = trimap_curve(&pred, &gt, &[1, 29]).unwrap();
        assert_eq!(curve.band_sizes[1], 400);
        assert_eq!(curve.errors[1], pixel_error(&pred, &gt).unwrap());
    }
}

#[test]
fn small_trimap_fixture() {
    // 2x2 object in a 4x4 grid, prediction misses one object pixel.
    let gt = square(4, 1, 1, 2);
    let mut pred = gt.clone();
    pred.set(1, 1, false);
    let curve = trimap_curve(&Prediction::Mask(pred.clone()), &gt, &[1]).unwrap();
    let (band, err) = common::trimap(&pred, &gt, 1);
    assert_eq!(curve.band_sizes[0], band);
    assert_eq!(curve.errors[0], 1.0 / band as f64);
    assert_eq!(curve.errors[0], err);
}

#[test]
fn report_means_skip_missing_values() {
    let gt = square(8, 2, 2, 3);
    let protocol = MetricProtocol::default();
    let good = evaluate_pair("a", &Prediction::Mask(gt.clone()), &gt, &protocol).unwrap();
    let empty = BinaryMask::empty(8, 8).unwrap();
    let bad = evaluate_pair("b", &Prediction::Mask(empty), &gt, &protocol).unwrap();
    assert_eq!(bad.hd, None);
    assert_eq!(bad.dice, 0.0);
    let report = MetricsReport::from_images(vec![good, bad]);
    assert_eq!(report.mean.hd, Some(0.0));
    assert_eq!(report.mean.dice, 0.5);
}

fn mask(side: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(prop::bool::weighted(0.3), side * side)
        .prop_map(move |d| BinaryMask::new(side, side, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dice_jaccard_identity_and_symmetry(a in mask(10), b in mask(10)) {
        let (d, j) = dice_jaccard(&a, &b).unwrap();
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&j));
        prop_assert_eq!(dice_jaccard(&b, &a).unwrap(), (d, j));
    }

    #[test]
    fn hausdorff_symmetric_and_triangle(a in mask(10), b in mask(10), c in mask(10)) {
        let h = |x: &BinaryMask, y: &BinaryMask| hausdorff(x, y).ok();
        prop_assert_eq!(h(&a, &b), h(&b, &a));
        if let (Some(ab), Some(bc), Some(ac)) = (h(&a, &b), h(&b, &c), h(&a, &c)) {
            prop_assert!(ac <= ab + bc + 1e-12);
        }
        if let Some(aa) = h(&a, &a) {
            prop_assert_eq!(aa, 0.0);
        }
    }

    #[test]
    fn mf_monotone_in_tolerance(gt in mask(10), probs in proptest::collection::vec(0.0f64..1.0, 100), t1 in 0.0f64..3.0, dt in 0.0f64..3.0) {
        prop_assume!(!common::boundary(&gt).is_empty());
        let pred = Prediction::Probability(ImageGrid::new(10, 10, probs).unwrap());
        let th = default_mf_thresholds();
        let lo = boundary_mf(&pred, &gt, t1, &th).unwrap();
        let hi = boundary_mf(&pred, &gt, t1 + dt, &th).unwrap();
        prop_assert!(lo <= hi);
        prop_assert!((0.0..=1.0).contains(&lo));
    }

    #[test]
    fn metrics_ignore_pixel_order(a in mask(8), b in mask(8)) {
        // Transposing both masks permutes pixels without changing geometry.
        let t = |m: &BinaryMask| BinaryMask::from_fn(8, 8, |r, c| m.get(c, r)).unwrap();
        prop_assert_eq!(dice_jaccard(&a, &b).unwrap(), dice_jaccard(&t(&a), &t(&b)).unwrap());
        prop_assert_eq!(hausdorff(&a, &b).ok(), hausdorff(&t(&a), &t(&b)).ok());
    }
}
