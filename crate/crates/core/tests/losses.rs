use convmcd::loss::{
    mse_loss, nll_loss, sigmoid, softmax2, total_loss, HeadVariant, LossWeights, PredictionTriple,
};
use convmcd::targets::{make_targets, ContourRadius, DistanceMap, DistanceMapKind};
use convmcd::{BinaryMask, ImageGrid, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, side: usize) -> BinaryMask {
    BinaryMask::from_fn(side, side, |_, _| rng.random_bool(0.4)).unwrap()
}

fn distance_target(grid: ImageGrid) -> DistanceMap {
    DistanceMap {
        grid,
        kind: DistanceMapKind::D2,
        normalized: true,
        source_empty: false,
    }
}

fn triple(rng: &mut ChaCha8Rng, side: usize) -> PredictionTriple {
    PredictionTriple {
        mask_logits: random_tensor(rng, [2, side, side], 3.0),
        contour_logits: Some(random_tensor(rng, [2, side, side], 3.0)),
        distance_raw: Some(random_tensor(rng, [1, side, side], 3.0)),
    }
}

fn targets(side: usize) -> convmcd::targets::TargetBundle {
    let mask = BinaryMask::from_fn(side, side, |r, c| (2..6).contains(&r) && (1..7).contains(&c))
        .unwrap();
    make_targets(&mask, DistanceMapKind::D3, ContourRadius::Fixed(1)).unwrap()
}

#[test]
fn nll_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let probs = softmax2(&random_tensor(&mut rng, [2, 8, 8], 4.0)).unwrap();
        let labels = random_labels(&mut rng, 8);
        let mut sum = 0.0;
        for r in 0..8 {
            for c in 0..8 {
                let k = usize::from(labels.get(r, c));
                sum += -probs.data()[k * 64 + r * 8 + c].max(1e-12).ln();
            }
        }
        let got = nll_loss(&probs, &labels).unwrap();
        assert!((got - sum / 64.0).abs() <= 1e-12, "{got} vs {}", sum / 64.0);
    }
}

#[test]
fn mse_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let pred = random_tensor(&mut rng, [1, 8, 8], 1.0).map(|v| v.abs());
        let target = ImageGrid::from_fn(8, 8, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let mut sum = 0.0;
        for r in 0..8 {
            for c in 0..8 {
                sum += (pred.data()[r * 8 + c] - target.get(r, c)).powi(2);
            }
        }
        let got = mse_loss(&pred, &distance_target(target)).unwrap();
        assert!((got - sum / 64.0).abs() <= 1e-12);
    }
}

#[test]
fn uniform_prediction_costs_ln2() {
    let labels = BinaryMask::from_fn(8, 8, |r, c| (r + c) % 3 == 0).unwrap();
    let probs = softmax2(&Tensor::zeros(vec![2, 8, 8])).unwrap();
    let got = nll_loss(&probs, &labels).unwrap();
    assert!((got - std::f64::consts::LN_2).abs() <= 1e-9);
}

#[test]
fn constant_offset_mse() {
    let pred = Tensor::filled(vec![1, 8, 8], 0.5);
    let target = distance_target(ImageGrid::filled(8, 8, 0.0).unwrap());
    assert!((mse_loss(&pred, &target).unwrap() - 0.25).abs() <= 1e-12);
}

#[test]
fn total_is_linear_in_each_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = targets(8);
    for _ in 0..20 {
        let pred = triple(&mut rng, 8);
        let (_, parts) = total_loss(&pred, &t, &LossWeights::default(), HeadVariant::Mcd).unwrap();
        let base = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let eval = |w: [f64; 3]| {
            total_loss(&pred, &t, &LossWeights::new(w[0], w[1], w[2]).unwrap(), HeadVariant::Mcd)
                .unwrap()
                .0
        };
        let part = [parts.mask, parts.contour, parts.distance];
        for k in 0..3 {
            let mut bumped = base;
            bumped[k] += 0.75;
            let slope = (eval(bumped) - eval(base)) / 0.75;
            assert!((slope - part[k]).abs() <= 1e-12, "weight {k}");
        }
        let mask_only = eval([1.0, 0.0, 0.0]);
        assert_eq!(mask_only.to_bits(), parts.mask.to_bits());
    }
}

#[test]
fn positive_scaling_keeps_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = targets(8);
    let preds: Vec<_> = (0..10).map(|_| triple(&mut rng, 8)).collect();
    let totals = |w: LossWeights| -> Vec<f64> {
        preds
            .iter()
            .map(|p| total_loss(p, &t, &w, HeadVariant::Mcd).unwrap().0)
            .collect()
    };
    let one = totals(LossWeights::new(1.0, 0.0, 0.0).unwrap());
    let two = totals(LossWeights::new(2.0, 0.0, 0.0).unwrap());
    for (a, b) in one.iter().zip(&two) {
        assert_eq!(2.0 * a, *b);
    }
    let argmin = |v: &[f64]| {
        (0..v.len()).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap()
    };
    assert_eq!(argmin(&one), argmin(&two));
}

#[test]
fn variants_zero_absent_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = targets(8);
    let full = triple(&mut rng, 8);
    let (_, parts) = total_loss(&full, &t, &LossWeights::default(), HeadVariant::Mcd).unwrap();
    let mc = PredictionTriple { distance_raw: None, ..full.clone() };
    let (total, p) = total_loss(&mc, &t, &LossWeights::default(), HeadVariant::Mc).unwrap();
    assert_eq!(p.distance, 0.0);
    assert_eq!(total, parts.mask + parts.contour);
    let md = PredictionTriple { contour_logits: None, ..full.clone() };
    let (total, p) = total_loss(&md, &t, &LossWeights::default(), HeadVariant::Md).unwrap();
    assert_eq!(p.contour, 0.0);
    assert_eq!(total, parts.mask + parts.distance);
    assert!(total_loss(&full, &t, &LossWeights::default(), HeadVariant::Mc).is_err());
}

proptest! {
    #[test]
    fn softmax_channels_sum_to_one(logits in proptest::collection::vec(-30.0f64..30.0, 2 * 16)) {
        let p = softmax2(&Tensor::new(vec![2, 4, 4], logits).unwrap()).unwrap();
        for i in 0..16 {
            let (a, b) = (p.data()[i], p.data()[16 + i]);
            prop_assert!((a + b - 1.0).abs() <= 1e-15);
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        }
    }

    #[test]
    fn losses_are_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (total, parts) =
            total_loss(&triple(&mut rng, 8), &targets(8), &LossWeights::default(), HeadVariant::Mcd)
                .unwrap();
        prop_assert!(parts.mask >= 0.0 && parts.contour >= 0.0 && parts.distance >= 0.0);
        prop_assert!(total >= 0.0);
        prop_assert!(parts.distance <= 1.0);
    }

    #[test]
    fn sigmoid_in_unit_interval(x in -700.0f64..700.0) {
        let s = sigmoid(x);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + sigmoid(-x) - 1.0).abs() <= 1e-15);
    }
}
