//! Segmentation quality measures: region overlap (Dice, Jaccard), shape
//! similarity (Hausdorff distance on boundaries), boundary-band error
//! (trimap curve) and the maximum boundary F-score.

use crate::error::{Error, Result};
use crate::raster::{
    boundary, ensure_same_dims, euclidean_distance_transform, squared_distance_transform,
    BinaryMask, ImageGrid,
};

/// Threshold used to binarize probability maps.
pub const PROBABILITY_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MF_TOLERANCE: f64 = 2.0;

/// Trimap widths 1..=20.
pub fn default_trimap_widths() -> Vec<u32> {
    (1..=20).collect()
}

/// Thresholds 0.05, 0.10, …, 0.95.
pub fn default_mf_thresholds() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// A prediction given either as a hard mask or as foreground probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Mask(BinaryMask),
    Probability(ImageGrid),
}

impl Prediction {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Self::Mask(m) => m.dims(),
            Self::Probability(g) => g.dims(),
        }
    }

    /// Hard mask at `threshold` (`p >= threshold` is foreground). Masks are
    /// returned as-is.
    pub fn binarize(&self, threshold: f64) -> BinaryMask {
        match self {
            Self::Mask(m) => m.clone(),
            Self::Probability(g) => g.threshold(threshold),
        }
    }

    fn probabilities(&self) -> ImageGrid {
        match self {
            Self::Mask(m) => m.to_grid(),
            Self::Probability(g) => g.clone(),
        }
    }
}

impl From<BinaryMask> for Prediction {
    fn from(m: BinaryMask) -> Self {
        Self::Mask(m)
    }
}

impl From<ImageGrid> for Prediction {
    fn from(g: ImageGrid) -> Self {
        Self::Probability(g)
    }
}

/// `(dice, jaccard)`; two empty masks score `(1, 1)`.
pub fn dice_jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    ensure_same_dims(pred.dims(), gt.dims(), "dice/jaccard")?;
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        a += usize::from(p);
        b += usize::from(g);
        inter += usize::from(p && g);
    }
    if a + b == 0 {
        return Ok((1.0, 1.0));
    }
    let union = a + b - inter;
    Ok((
        2.0 * inter as f64 / (a + b) as f64,
        inter as f64 / union as f64,
    ))
}

/// Symmetric Hausdorff distance between the inner boundaries of two masks.
///
/// Both boundaries empty gives 0; exactly one empty is an error.
pub fn hausdorff(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    ensure_same_dims(pred.dims(), gt.dims(), "hausdorff")?;
    let (bp, bg) = (boundary(pred), boundary(gt));
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Err(Error::EmptyBoundary),
        _ => {}
    }
    Ok(directed_hausdorff_sq(&bp, &bg)
        .max(directed_hausdorff_sq(&bg, &bp))
        .sqrt())
}

/// `max over a in from` of the squared distance to the nearest pixel of `to`.
fn directed_hausdorff_sq(from: &BinaryMask, to: &BinaryMask) -> f64 {
    let sq = squared_distance_transform(to).expect("caller checked non-empty");
    from.data()
        .iter()
        .zip(&sq)
        .filter(|(&f, _)| f)
        .fold(0.0, |m, (_, &d)| m.max(d))
}

/// Misclassification rate within bands around the ground-truth boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimapCurve {
    pub widths: Vec<u32>,
    pub errors: Vec<f64>,
    pub band_sizes: Vec<usize>,
}

/// For each width `w`, the band is every pixel within euclidean distance `w`
/// of the ground-truth boundary (both sides); the error is the fraction of
/// band pixels where the thresholded prediction disagrees with `gt`.
pub fn trimap_curve(pred: &Prediction, gt: &BinaryMask, widths: &[u32]) -> Result<TrimapCurve> {
    ensure_same_dims(pred.dims(), gt.dims(), "trimap")?;
    if widths.is_empty() || widths[0] == 0 || widths.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidArgument(
            "trimap widths must be non-empty, positive and strictly increasing".into(),
        ));
    }
    let gb = boundary(gt);
    let Some(sq) = squared_distance_transform(&gb) else {
        return Err(Error::EmptyBoundary);
    };
    let hard = pred.binarize(PROBABILITY_THRESHOLD);
    let wrong: Vec<bool> = hard
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| a != b)
        .collect();

    let mut errors = Vec::with_capacity(widths.len());
    let mut band_sizes = Vec::with_capacity(widths.len());
    for &w in widths {
        let limit = (w as f64) * (w as f64);
        let (mut band, mut miss) = (0usize, 0usize);
        for (&d, &bad) in sq.iter().zip(&wrong) {
            if d <= limit {
                band += 1;
                miss += usize::from(bad);
            }
        }
        // The boundary itself is always in the band, so band > 0.
        errors.push(miss as f64 / band as f64);
        band_sizes.push(band);
    }
    Ok(TrimapCurve {
        widths: widths.to_vec(),
        errors,
        band_sizes,
    })
}

/// Fraction of all pixels where the thresholded prediction differs from `gt`.
pub fn pixel_error(pred: &Prediction, gt: &BinaryMask) -> Result<f64> {
    ensure_same_dims(pred.dims(), gt.dims(), "pixel error")?;
    let hard = pred.binarize(PROBABILITY_THRESHOLD);
    let wrong = hard
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / gt.data().len() as f64)
}

/// Boundary precision, recall and F-score at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryScore {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Boundary F-score at each threshold. Matching is by distance transform:
/// a boundary pixel counts as matched if the other boundary has a pixel
/// within `tolerance`.
pub fn boundary_scores(
    pred: &Prediction,
    gt: &BinaryMask,
    tolerance: f64,
    thresholds: &[f64],
) -> Result<Vec<BoundaryScore>> {
    ensure_same_dims(pred.dims(), gt.dims(), "boundary F-score")?;
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be finite and >= 0, got {tolerance}"
        )));
    }
    if thresholds.is_empty() || thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidArgument(
            "thresholds must be non-empty and inside (0, 1)".into(),
        ));
    }
    let gb = boundary(gt);
    let gt_field = euclidean_distance_transform(&gb);
    if gt_field.source_empty {
        return Err(Error::EmptyBoundary);
    }
    let probs = pred.probabilities();
    thresholds
        .iter()
        .map(|&t| {
            let pb = boundary(&probs.threshold(t));
            let pred_field = euclidean_distance_transform(&pb);
            let within = |field: &ImageGrid, set: &BinaryMask| -> (usize, usize) {
                set.data()
                    .iter()
                    .zip(field.data())
                    .filter(|(&s, _)| s)
                    .fold((0, 0), |(hit, n), (_, &d)| (hit + usize::from(d <= tolerance), n + 1))
            };
            let (p_hit, p_n) = within(&gt_field.grid, &pb);
            let (r_hit, r_n) = within(&pred_field.grid, &gb);
            let precision = if p_n == 0 { 0.0 } else { p_hit as f64 / p_n as f64 };
            let recall = if pred_field.source_empty {
                0.0
            } else {
                r_hit as f64 / r_n as f64
            };
            let f_score = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            Ok(BoundaryScore {
                threshold: t,
                precision,
                recall,
                f_score,
            })
        })
        .collect()
}

/// Maximum boundary F-score over `thresholds`.
pub fn boundary_mf(pred: &Prediction, gt: &BinaryMask, tolerance: f64, thresholds: &[f64]) -> Result<f64> {
    Ok(boundary_scores(pred, gt, tolerance, thresholds)?
        .iter()
        .fold(0.0, |m, s| m.max(s.f_score)))
}

/// Parameters of the evaluation protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricProtocol {
    pub trimap_widths: Vec<u32>,
    pub mf_tolerance: f64,
    pub mf_thresholds: Vec<f64>,
}

impl Default for MetricProtocol {
    fn default() -> Self {
        Self {
            trimap_widths: default_trimap_widths(),
            mf_tolerance: DEFAULT_MF_TOLERANCE,
            mf_thresholds: default_mf_thresholds(),
        }
    }
}

/// Metrics of one prediction/ground-truth pair. `hd` and `mf` are `None`
/// when a boundary is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub dice: f64,
    pub jaccard: f64,
    pub hd: Option<f64>,
    pub mf: Option<f64>,
    pub trimap: Option<TrimapCurve>,
}

/// Summary over images. Means skip `None` entries; they are `None` only if
/// every image was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsMean {
    pub dice: f64,
    pub jaccard: f64,
    pub hd: Option<f64>,
    pub mf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
    pub mean: MetricsMean,
    /// Mean trimap error per width over images that have a curve.
    pub trimap: Option<TrimapCurve>,
}

/// Evaluates one pair. Degenerate boundaries turn HD/MF/trimap into `None`;
/// shape mismatches and bad protocol parameters are still errors.
pub fn evaluate_pair(
    name: impl Into<String>,
    pred: &Prediction,
    gt: &BinaryMask,
    protocol: &MetricProtocol,
) -> Result<ImageMetrics> {
    let hard = pred.binarize(PROBABILITY_THRESHOLD);
    let (dice, jaccard) = dice_jaccard(&hard, gt)?;
    let hd = skip_empty(hausdorff(&hard, gt))?;
    let mf = skip_empty(boundary_mf(pred, gt, protocol.mf_tolerance, &protocol.mf_thresholds))?;
    let trimap = skip_empty(trimap_curve(pred, gt, &protocol.trimap_widths))?;
    Ok(ImageMetrics {
        name: name.into(),
        dice,
        jaccard,
        hd,
        mf,
        trimap,
    })
}

fn skip_empty<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyBoundary) => Ok(None),
        Err(e) => Err(e),
    }
}

impl MetricsReport {
    /// Aggregates per-image rows in the order given.
    pub fn from_images(images: Vec<ImageMetrics>) -> Self {
        fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
            let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        }
        let mean = MetricsMean {
            dice: mean(images.iter().map(|m| m.dice)).unwrap_or(0.0),
            jaccard: mean(images.iter().map(|m| m.jaccard)).unwrap_or(0.0),
            hd: mean(images.iter().filter_map(|m| m.hd)),
            mf: mean(images.iter().filter_map(|m| m.mf)),
        };
        let curves: Vec<&TrimapCurve> = images.iter().filter_map(|m| m.trimap.as_ref()).collect();
        let trimap = curves.first().map(|first| {
            let n = curves.len() as f64;
            TrimapCurve {
                widths: first.widths.clone(),
                errors: (0..first.widths.len())
                    .map(|i| curves.iter().map(|c| c.errors[i]).sum::<f64>() / n)
                    .collect(),
                band_sizes: (0..first.widths.len())
                    .map(|i| curves.iter().map(|c| c.band_sizes[i]).sum())
                    .collect(),
            }
        });
        Self {
            images,
            mean,
            trimap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: usize, h: usize, top: usize, left: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |r, c| {
            r >= top && r < top + side && c >= left && c < left + side
        })
        .unwrap()
    }

    #[test]
    fn dice_identity_and_analytic() {
        let a = square(6, 6, 1, 1, 2);
        assert_eq!(dice_jaccard(&a, &a).unwrap(), (1.0, 1.0));
        let b = square(6, 6, 1, 2, 2);
        let (d, j) = dice_jaccard(&a, &b).unwrap();
        assert_eq!(d, 0.5);
        assert_eq!(j, 1.0 / 3.0);
        let e = BinaryMask::empty(6, 6).unwrap();
        assert_eq!(dice_jaccard(&e, &e).unwrap(), (1.0, 1.0));
        assert_eq!(dice_jaccard(&a, &e).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn hausdorff_cases() {
        let a = BinaryMask::from_pixels(6, 6, [(0, 0)]).unwrap();
        let b = BinaryMask::from_pixels(6, 6, [(3, 4)]).unwrap();
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let e = BinaryMask::empty(6, 6).unwrap();
        assert_eq!(hausdorff(&e, &e).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &e), Err(Error::EmptyBoundary));
    }

    #[test]
    fn trimap_perfect_and_saturated() {
        let gt = square(12, 12, 3, 3, 5);
        let c = trimap_curve(&gt.clone().into(), &gt, &[1, 2, 3]).unwrap();
        assert!(c.errors.iter().all(|&e| e == 0.0));
        assert!(c.band_sizes.windows(2).all(|p| p[0] <= p[1]));

        let pred = square(12, 12, 4, 3, 5);
        let diag = (12f64.hypot(12.0)).ceil() as u32;
        let c = trimap_curve(&pred.clone().into(), &gt, &[1, diag]).unwrap();
        assert_eq!(c.band_sizes[1], 144);
        assert_eq!(c.errors[1], pixel_error(&pred.into(), &gt).unwrap());
    }

    #[test]
    fn trimap_small_example() {
        let gt = square(4, 4, 1, 1, 2);
        let mut pred = gt.clone();
        pred.set(1, 1, false);
        let c = trimap_curve(&pred.into(), &gt, &[1]).unwrap();
        // Band within distance 1 of the 2×2 boundary: the square plus its
        // 4-neighbours (8 pixels); diagonal corners are √2 away.
        assert_eq!(c.band_sizes, vec![12]);
        assert_eq!(c.errors, vec![1.0 / 12.0]);
    }

    #[test]
    fn trimap_rejects_bad_widths() {
        let gt = square(4, 4, 1, 1, 2);
        let p: Prediction = gt.clone().into();
        assert!(trimap_curve(&p, &gt, &[]).is_err());
        assert!(trimap_curve(&p, &gt, &[2, 2]).is_err());
        assert!(trimap_curve(&p, &gt, &[0, 1]).is_err());
        let e = BinaryMask::empty(4, 4).unwrap();
        assert_eq!(trimap_curve(&p, &e, &[1]), Err(Error::EmptyBoundary));
    }

    #[test]
    fn mf_cases() {
        let gt = square(16, 16, 4, 4, 6);
        let th = default_mf_thresholds();
        assert_eq!(boundary_mf(&gt.clone().into(), &gt, 2.0, &th).unwrap(), 1.0);
        let shifted = square(16, 16, 4, 5, 6);
        assert_eq!(boundary_mf(&shifted.clone().into(), &gt, 2.0, &[0.5]).unwrap(), 1.0);
        assert!(boundary_mf(&shifted.into(), &gt, 0.0, &[0.5]).unwrap() < 1.0);
        let blank = ImageGrid::filled(16, 16, 0.0).unwrap();
        assert_eq!(boundary_mf(&blank.into(), &gt, 2.0, &th).unwrap(), 0.0);
        assert!(boundary_mf(&gt.clone().into(), &gt, 2.0, &[1.0]).is_err());
    }

    #[test]
    fn evaluate_pair_degrades_on_empty() {
        let gt = BinaryMask::empty(8, 8).unwrap();
        let pred = square(8, 8, 2, 2, 3);
        let m = evaluate_pair("x", &pred.into(), &gt, &MetricProtocol::default()).unwrap();
        assert_eq!(m.dice, 0.0);
        assert!(m.hd.is_none() && m.mf.is_none() && m.trimap.is_none());
        let report = MetricsReport::from_images(vec![m]);
        assert_eq!(report.mean.hd, None);
        assert!(report.trimap.is_none());
    }
}
