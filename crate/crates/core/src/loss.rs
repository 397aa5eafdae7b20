//! Head configuration and the weighted multi-task loss, computed on plain
//! tensors. The autodiff graph reuses these forward routines so both paths
//! produce identical values.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::targets::{DistanceMap, TargetBundle};
use crate::tensor::Tensor;

/// Floor applied to probabilities before taking the log.
pub const LOG_EPSILON: f64 = 1e-12;

pub const KERNEL_SIZE: usize = 3;
pub const STRIDE: usize = 1;
pub const PADDING: usize = 1;

/// Which auxiliary heads accompany the mask head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HeadVariant {
    /// Mask, contour and distance.
    #[default]
    Mcd,
    /// Mask and contour.
    Mc,
    /// Mask and distance.
    Md,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 3] = [HeadVariant::Mcd, HeadVariant::Mc, HeadVariant::Md];

    pub fn has_contour(self) -> bool {
        matches!(self, Self::Mcd | Self::Mc)
    }

    pub fn has_distance(self) -> bool {
        matches!(self, Self::Mcd | Self::Md)
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mcd => "mcd",
            Self::Mc => "mc",
            Self::Md => "md",
        })
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcd" => Ok(Self::Mcd),
            "mc" => Ok(Self::Mc),
            "md" => Ok(Self::Md),
            _ => Err(Error::InvalidArgument(format!(
                "unknown head variant {s:?} (expected mcd, mc or md)"
            ))),
        }
    }
}

/// Shape of the multi-task head. Kernel, stride and padding are fixed at
/// 3×3 / 1 / 1 and are not part of the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    in_channels: usize,
    num_classes: usize,
    variant: HeadVariant,
}

impl HeadConfig {
    pub fn new(in_channels: usize, variant: HeadVariant) -> Result<Self> {
        Self::with_classes(in_channels, 2, variant)
    }

    pub fn with_classes(in_channels: usize, num_classes: usize, variant: HeadVariant) -> Result<Self> {
        if in_channels == 0 {
            return Err(Error::InvalidArgument("head needs at least one input channel".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("classification heads need >= 2 classes".into()));
        }
        Ok(Self {
            in_channels,
            num_classes,
            variant,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn variant(&self) -> HeadVariant {
        self.variant
    }

    /// Output channels of each present head: mask, contour, distance.
    pub fn head_channels(&self) -> [Option<usize>; 3] {
        [
            Some(self.num_classes),
            self.variant.has_contour().then_some(self.num_classes),
            self.variant.has_distance().then_some(1),
        ]
    }

    /// Weights plus biases across all heads: `9·K·Σout + Σout`.
    pub fn parameter_count(&self) -> usize {
        let outputs: usize = self.head_channels().iter().flatten().sum();
        self.weight_count() + outputs
    }

    /// Convolution weights only, excluding biases.
    pub fn weight_count(&self) -> usize {
        let outputs: usize = self.head_channels().iter().flatten().sum();
        KERNEL_SIZE * KERNEL_SIZE * self.in_channels * outputs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mask: f64,
    pub contour: f64,
    pub distance: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mask: 1.0,
            contour: 1.0,
            distance: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(mask: f64, contour: f64, distance: f64) -> Result<Self> {
        let w = Self {
            mask,
            contour,
            distance,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.mask, self.contour, self.distance] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "loss weights must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Weights with the terms of heads absent from `variant` zeroed.
    pub fn for_variant(&self, variant: HeadVariant) -> Self {
        Self {
            mask: self.mask,
            contour: if variant.has_contour() { self.contour } else { 0.0 },
            distance: if variant.has_distance() { self.distance } else { 0.0 },
        }
    }
}

/// Raw head outputs: classification logits and the pre-sigmoid distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTriple {
    pub mask_logits: Tensor,
    pub contour_logits: Option<Tensor>,
    pub distance_raw: Option<Tensor>,
}

/// Unweighted per-task losses. Absent heads contribute 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub mask: f64,
    pub contour: f64,
    pub distance: f64,
}

impl LossParts {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.mask * self.mask + w.contour * self.contour + w.distance * self.distance
    }
}

/// Channel softmax at every pixel of a `[C, H, W]` tensor, stabilized by
/// subtracting the per-pixel maximum.
pub fn softmax2(logits: &Tensor) -> Result<Tensor> {
    let (c, h, w) = logits.chw()?;
    if c < 2 {
        return Err(Error::ShapeMismatch(format!("softmax needs >= 2 channels, got {c}")));
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("softmax input"));
    }
    let plane = h * w;
    let x = logits.data();
    let mut out = vec![0.0; x.len()];
    for p in 0..plane {
        let max = (0..c).map(|k| x[k * plane + p]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for k in 0..c {
            let e = (x[k * plane + p] - max).exp();
            out[k * plane + p] = e;
            sum += e;
        }
        for k in 0..c {
            out[k * plane + p] /= sum;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_tensor(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

/// Mean negative log-likelihood of the true label, probabilities floored at
/// [`LOG_EPSILON`].
pub fn nll_loss(probs: &Tensor, labels: &BinaryMask) -> Result<f64> {
    let (c, h, w) = probs.chw()?;
    if c < 2 || (h, w) != (labels.height(), labels.width()) {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {:?} vs labels {}x{}",
            probs.shape(),
            labels.height(),
            labels.width()
        )));
    }
    let plane = h * w;
    let p = probs.data();
    let mut sum = 0.0;
    for (i, &fg) in labels.data().iter().enumerate() {
        let k = usize::from(fg);
        sum -= p[k * plane + i].max(LOG_EPSILON).ln();
    }
    Ok(sum / plane as f64)
}

/// Mean squared error between a sigmoid output and a normalized target.
pub fn mse_loss(pred: &Tensor, target: &DistanceMap) -> Result<f64> {
    if !target.normalized {
        return Err(Error::UnnormalizedTarget);
    }
    let (c, h, w) = pred.chw()?;
    if c != 1 || (h, w) != (target.grid.height(), target.grid.width()) {
        return Err(Error::ShapeMismatch(format!(
            "distance prediction {:?} vs target {}x{}",
            pred.shape(),
            target.grid.height(),
            target.grid.width()
        )));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.grid.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `λ₁·L_mask + λ₂·L_contour + λ₃·L_distance`, with the activations applied
/// here to raw head outputs.
pub fn total_loss(
    pred: &PredictionTriple,
    targets: &TargetBundle,
    weights: &LossWeights,
    variant: HeadVariant,
) -> Result<(f64, LossParts)> {
    weights.validate()?;
    if pred.contour_logits.is_some() != variant.has_contour()
        || pred.distance_raw.is_some() != variant.has_distance()
    {
        return Err(Error::VariantMismatch(variant.to_string()));
    }
    let mut parts = LossParts {
        mask: nll_loss(&softmax2(&pred.mask_logits)?, &targets.mask)?,
        ..LossParts::default()
    };
    if let Some(logits) = &pred.contour_logits {
        parts.contour = nll_loss(&softmax2(logits)?, &targets.contour)?;
    }
    if let Some(raw) = &pred.distance_raw {
        if !raw.all_finite() {
            return Err(Error::NonFinite("distance head output"));
        }
        parts.distance = mse_loss(&sigmoid_tensor(raw), &targets.distance)?;
    }
    let total = parts.weighted_total(&weights.for_variant(variant));
    Ok((total, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ImageGrid;
    use crate::targets::DistanceMapKind;

    fn target_map(values: Vec<f64>, w: usize, h: usize) -> DistanceMap {
        DistanceMap {
            grid: ImageGrid::new(w, h, values).unwrap(),
            kind: DistanceMapKind::D2,
            normalized: true,
            source_empty: false,
        }
    }

    #[test]
    fn parameter_count_formula() {
        let mcd = HeadConfig::new(32, HeadVariant::Mcd).unwrap();
        assert_eq!(mcd.parameter_count(), 1445);
        let mc = HeadConfig::new(32, HeadVariant::Mc).unwrap();
        let md = HeadConfig::new(32, HeadVariant::Md).unwrap();
        assert_eq!(mc.parameter_count(), 9 * 32 * 4 + 4);
        assert_eq!(md.parameter_count(), 9 * 32 * 3 + 3);
        assert_eq!(mcd.parameter_count() - md.parameter_count(), 578);
        assert!(HeadConfig::new(0, HeadVariant::Mcd).is_err());
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let t = Tensor::new([2, 1, 2], vec![0.0, 1000.0, 0.0, 0.0]).unwrap();
        let s = softmax2(&t).unwrap();
        assert_eq!(s.data()[0], 0.5);
        assert_eq!(s.data()[2], 0.5);
        assert_eq!(s.data()[1], 1.0);
        assert!(s.data()[3] < 1e-300);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let t = Tensor::new([2, 1, 1], vec![f64::NAN, 0.0]).unwrap();
        assert_eq!(softmax2(&t), Err(Error::NonFinite("softmax input")));
        let t = Tensor::new([2, 1, 1], vec![f64::INFINITY, 0.0]).unwrap();
        assert!(softmax2(&t).is_err());
    }

    #[test]
    fn nll_of_uniform_is_ln2() {
        let probs = Tensor::filled([2, 3, 3], 0.5);
        let labels = BinaryMask::from_fn(3, 3, |r, c| (r + c) % 2 == 0).unwrap();
        let l = nll_loss(&probs, &labels).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn nll_of_perfect_prediction_is_tiny() {
        let labels = BinaryMask::from_fn(2, 2, |r, _| r == 0).unwrap();
        let mut probs = Tensor::zeros([2, 2, 2]);
        for (i, &fg) in labels.data().iter().enumerate() {
            probs.data_mut()[usize::from(fg) * 4 + i] = 1.0;
        }
        assert_eq!(nll_loss(&probs, &labels).unwrap(), 0.0);
        // A confidently wrong pixel is capped by the log floor.
        probs.data_mut().swap(0, 4);
        let l = nll_loss(&probs, &labels).unwrap();
        assert!((l - (-LOG_EPSILON.ln()) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn nll_shape_mismatch() {
        let probs = Tensor::filled([2, 3, 3], 0.5);
        let labels = BinaryMask::empty(2, 3).unwrap();
        assert!(matches!(nll_loss(&probs, &labels), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mse_cases() {
        let t = target_map(vec![0.0; 4], 2, 2);
        assert_eq!(mse_loss(&Tensor::filled([1, 2, 2], 0.5), &t).unwrap(), 0.25);
        assert_eq!(mse_loss(&Tensor::zeros([1, 2, 2]), &t).unwrap(), 0.0);
        let mut raw = t.clone();
        raw.normalized = false;
        assert_eq!(
            mse_loss(&Tensor::zeros([1, 2, 2]), &raw),
            Err(Error::UnnormalizedTarget)
        );
        assert!(mse_loss(&Tensor::zeros([1, 2, 3]), &t).is_err());
    }

    #[test]
    fn weighted_total() {
        let parts = LossParts {
            mask: 0.2,
            contour: 0.3,
            distance: 0.1,
        };
        let t = parts.weighted_total(&LossWeights::default());
        assert!((t - 0.6).abs() < 1e-15);
        let only_mask = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(parts.weighted_total(&only_mask), 0.2);
        assert!(LossWeights::new(-1.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn variant_checks() {
        let mask = BinaryMask::empty(2, 2).unwrap();
        let targets = TargetBundle {
            mask: mask.clone(),
            contour: mask,
            distance: target_map(vec![0.0; 4], 2, 2),
        };
        let pred = PredictionTriple {
            mask_logits: Tensor::zeros([2, 2, 2]),
            contour_logits: None,
            distance_raw: Some(Tensor::zeros([1, 2, 2])),
        };
        let w = LossWeights::default();
        assert!(matches!(
            total_loss(&pred, &targets, &w, HeadVariant::Mcd),
            Err(Error::VariantMismatch(_))
        ));
        let (total, parts) = total_loss(&pred, &targets, &w, HeadVariant::Md).unwrap();
        assert_eq!(parts.contour, 0.0);
        assert!((parts.mask - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(parts.distance, 0.25);
        assert_eq!(total, parts.mask + 0.25);
    }
}
