//! Deterministic toy training for [`ToyNet`].

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::loss::{HeadVariant, LossParts, LossWeights};
use crate::metrics::dice_jaccard;
use crate::model::{loss_graph, HeadOutputs, ToyNet};
use crate::raster::{BinaryMask, ImageGrid};
use crate::synth::synthetic_shapes;
use crate::targets::{make_targets, ContourRadius, DistanceMapKind, TargetBundle};
use crate::tensor::Tensor;

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ImageGrid,
    pub targets: TargetBundle,
}

impl Sample {
    pub fn new(image: ImageGrid, targets: TargetBundle) -> Result<Self> {
        if image.dims() != targets.mask.dims() {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} vs targets {:?}",
                image.dims(),
                targets.mask.dims()
            )));
        }
        Ok(Self { image, targets })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Self::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::Sgd { lr }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam(1e-4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub weights: LossWeights,
    pub variant: HeadVariant,
    pub features: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            optimizer: Optimizer::default(),
            weights: LossWeights::default(),
            variant: HeadVariant::Mcd,
            features: ToyNet::DEFAULT_FEATURES,
            seed: 0,
        }
    }
}

/// Mean losses over one epoch. Epoch 0 is an evaluation of the initial
/// parameters; epoch `e > 0` averages the per-step losses seen while
/// training through epoch `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub parts: LossParts,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

/// Owns a network and its optimizer state; one call to [`step`](Self::step)
/// is one update on one sample.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: ToyNet,
    optimizer: Optimizer,
    weights: LossWeights,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    steps: i32,
}

/// Losses produced by one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub parts: LossParts,
}

impl Trainer {
    pub fn new(net: ToyNet, optimizer: Optimizer, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        let shapes: Vec<usize> = net.parameters().iter().map(|t| t.len()).collect();
        let weights = weights.for_variant(net.variant());
        Ok(Self {
            net,
            optimizer,
            weights,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            steps: 0,
        })
    }

    pub fn net(&self) -> &ToyNet {
        &self.net
    }

    pub fn into_net(self) -> ToyNet {
        self.net
    }

    /// Forward pass and losses without updating anything.
    pub fn evaluate(&self, sample: &Sample) -> Result<StepLoss> {
        let mut g = Graph::new();
        let (loss, ..) = self.forward_loss(&mut g, sample)?;
        Ok(loss)
    }

    /// One optimizer update on the weighted multi-task loss.
    pub fn step(&mut self, sample: &Sample) -> Result<StepLoss> {
        self.step_inner(sample, |_, _, total| Ok(total))
    }

    /// One optimizer update on a custom scalar loss built from the head
    /// outputs. The returned losses are the standard multi-task losses of the
    /// same forward pass, for logging.
    pub fn step_with(
        &mut self,
        sample: &Sample,
        build: impl FnOnce(&mut Graph, &HeadOutputs) -> Result<Var>,
    ) -> Result<StepLoss> {
        self.step_inner(sample, |g, out, _| build(g, out))
    }

    fn step_inner(
        &mut self,
        sample: &Sample,
        root: impl FnOnce(&mut Graph, &HeadOutputs, Var) -> Result<Var>,
    ) -> Result<StepLoss> {
        let mut g = Graph::new();
        let (loss, out, total, params) = self.forward_loss(&mut g, sample)?;
        let root = root(&mut g, &out, total)?;
        if !g.scalar(root).is_finite() || !loss.total.is_finite() {
            return Err(Error::DivergenceDetected { epoch: 0 });
        }
        g.backward(root)?;
        let grads: Vec<Option<Vec<f64>>> = params
            .iter()
            .map(|&v| g.grad(v).map(|t| t.data().to_vec()))
            .collect();
        self.apply(&grads);
        Ok(loss)
    }

    fn forward_loss(
        &self,
        g: &mut Graph,
        sample: &Sample,
    ) -> Result<(StepLoss, HeadOutputs, Var, Vec<Var>)> {
        let x = g.constant(Tensor::from_grid(&sample.image));
        let (out, params) = self.net.forward_graph(g, x)?;
        let vars = loss_graph(g, &out, &sample.targets, &self.weights)?;
        let parts = LossParts {
            mask: g.scalar(vars.mask),
            contour: vars.contour.map_or(0.0, |v| g.scalar(v)),
            distance: vars.distance.map_or(0.0, |v| g.scalar(v)),
        };
        let loss = StepLoss {
            total: g.scalar(vars.total),
            parts,
        };
        Ok((loss, out, vars.total, params))
    }

    fn apply(&mut self, grads: &[Option<Vec<f64>>]) {
        self.steps += 1;
        let t = self.steps;
        let optimizer = self.optimizer;
        let mut params = self.net.parameters_mut();
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = &grads[i] else {
                continue;
            };
            match optimizer {
                Optimizer::Sgd { lr } => {
                    for (w, &gv) in p.data_mut().iter_mut().zip(g) {
                        *w -= lr * gv;
                    }
                }
                Optimizer::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    for (j, (w, &gv)) in p.data_mut().iter_mut().zip(g).enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gv;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gv * gv;
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

fn mean_record(epoch: usize, losses: &[StepLoss]) -> EpochRecord {
    let n = losses.len() as f64;
    let sum = losses.iter().fold(
        (0.0, LossParts::default()),
        |(t, p), l| {
            (
                t + l.total,
                LossParts {
                    mask: p.mask + l.parts.mask,
                    contour: p.contour + l.parts.contour,
                    distance: p.distance + l.parts.distance,
                },
            )
        },
    );
    EpochRecord {
        epoch,
        total: sum.0 / n,
        parts: LossParts {
            mask: sum.1.mask / n,
            contour: sum.1.contour / n,
            distance: sum.1.distance / n,
        },
    }
}

fn check_dataset(dataset: &[Sample]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for s in dataset {
        let (w, h) = s.image.dims();
        if w % 2 != 0 || h % 2 != 0 {
            return Err(Error::OddDimension { height: h, width: w });
        }
    }
    Ok(())
}

/// Trains a freshly initialized [`ToyNet`] on `dataset` in fixed order, one
/// sample per step.
pub fn train_toy(dataset: &[Sample], config: &TrainConfig) -> Result<(ToyNet, TrainTrace)> {
    check_dataset(dataset)?;
    let net = ToyNet::new(1, config.features, config.variant, config.seed)?;
    let mut trainer = Trainer::new(net, config.optimizer, config.weights)?;
    let trace = run_epochs(&mut trainer, dataset, config.epochs)?;
    Ok((trainer.into_net(), trace))
}

/// Runs `epochs` passes over `dataset`, recording the trace.
pub fn run_epochs(trainer: &mut Trainer, dataset: &[Sample], epochs: usize) -> Result<TrainTrace> {
    check_dataset(dataset)?;
    let initial = dataset
        .iter()
        .map(|s| trainer.evaluate(s))
        .collect::<Result<Vec<_>>>()?;
    let mut records = vec![mean_record(0, &initial)];
    if !records[0].total.is_finite() {
        return Err(Error::DivergenceDetected { epoch: 0 });
    }
    for epoch in 1..=epochs {
        let mut losses = Vec::with_capacity(dataset.len());
        for s in dataset {
            let l = trainer.step(s).map_err(|e| match e {
                Error::DivergenceDetected { .. } | Error::NonFinite(_) => {
                    Error::DivergenceDetected { epoch }
                }
                other => other,
            })?;
            losses.push(l);
        }
        records.push(mean_record(epoch, &losses));
    }
    Ok(TrainTrace { records })
}

/// Foreground probability (softmax channel 1) of the mask head.
pub fn predict_probability(net: &ToyNet, image: &ImageGrid) -> Result<ImageGrid> {
    let p = net.predict(&Tensor::from_grid(image))?;
    let probs = crate::loss::softmax2(&p.mask_logits)?;
    probs.channel(1)
}

pub fn predict_mask(net: &ToyNet, image: &ImageGrid) -> Result<BinaryMask> {
    Ok(predict_probability(net, image)?.threshold(crate::metrics::PROBABILITY_THRESHOLD))
}

/// Mean Dice of thresholded mask predictions over `samples`.
pub fn mean_dice(net: &ToyNet, samples: &[Sample]) -> Result<f64> {
    let mut sum = 0.0;
    for s in samples {
        sum += dice_jaccard(&predict_mask(net, &s.image)?, &s.targets.mask)?.0;
    }
    Ok(sum / samples.len() as f64)
}

/// Settings of the synthetic demo run.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub train: TrainConfig,
    pub distance: DistanceMapKind,
    pub radius: ContourRadius,
    pub images: usize,
    pub size: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                optimizer: Optimizer::adam(DEMO_LEARNING_RATE),
                ..TrainConfig::default()
            },
            distance: DistanceMapKind::D3,
            radius: ContourRadius::Auto,
            images: 4,
            size: 64,
        }
    }
}

/// Learning rate of the demo run; the 500-epoch budget is too short for
/// the 1e-4 default to fit the synthetic shapes.
pub const DEMO_LEARNING_RATE: f64 = 1e-2;

/// Builds `count` synthetic samples with targets.
pub fn synthetic_samples(
    seed: u64,
    count: usize,
    size: usize,
    kind: DistanceMapKind,
    radius: ContourRadius,
) -> Result<Vec<Sample>> {
    synthetic_shapes(seed, count, size)?
        .into_iter()
        .map(|s| Sample::new(s.image, make_targets(&s.mask, kind, radius)?))
        .collect()
}

#[derive(Debug, Clone)]
pub struct DemoResult {
    pub samples: Vec<Sample>,
    pub net: ToyNet,
    pub trace: TrainTrace,
    pub train_dice: f64,
}

/// Trains on `images` synthetic shapes derived from `train.seed`.
pub fn run_demo(config: &DemoConfig) -> Result<DemoResult> {
    let samples = synthetic_samples(
        config.train.seed,
        config.images,
        config.size,
        config.distance,
        config.radius,
    )?;
    let (net, trace) = train_toy(&samples, &config.train)?;
    let train_dice = mean_dice(&net, &samples)?;
    Ok(DemoResult {
        samples,
        net,
        trace,
        train_dice,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_set() -> Vec<Sample> {
        synthetic_samples(5, 2, 16, DistanceMapKind::D2, ContourRadius::Fixed(1)).unwrap()
    }

    fn config(epochs: usize, optimizer: Optimizer) -> TrainConfig {
        TrainConfig {
            epochs,
            optimizer,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let data = tiny_set();
        for opt in [Optimizer::sgd(0.0), Optimizer::adam(0.0)] {
            let (net, trace) = train_toy(&data, &config(1, opt)).unwrap();
            assert_eq!(net, ToyNet::new(1, 8, HeadVariant::Mcd, 9).unwrap());
            assert_eq!(trace.records.len(), 2);
            assert_eq!(trace.records[0].total, trace.records[1].total);
            assert_eq!(trace.records[0].parts, trace.records[1].parts);
        }
    }

    #[test]
    fn zero_epochs_records_initial_row() {
        let (_, trace) = train_toy(&tiny_set(), &config(0, Optimizer::adam(1e-3))).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].epoch, 0);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let data = tiny_set();
        let a = train_toy(&data, &config(3, Optimizer::adam(1e-3))).unwrap();
        let b = train_toy(&data, &config(3, Optimizer::adam(1e-3))).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn loss_decreases_with_training() {
        let data = tiny_set();
        let (_, trace) = train_toy(&data, &config(20, Optimizer::adam(1e-2))).unwrap();
        let first = trace.records[0].total;
        let last = trace.records.last().unwrap().total;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn divergence_is_reported() {
        let data = tiny_set();
        let err = train_toy(&data, &config(5, Optimizer::sgd(1e300))).unwrap_err();
        assert!(matches!(err, Error::DivergenceDetected { .. }), "{err:?}");
    }

    #[test]
    fn rejects_empty_and_odd_datasets() {
        assert!(train_toy(&[], &TrainConfig::default()).is_err());
        let mut data = tiny_set();
        let odd = ImageGrid::filled(15, 16, 0.0).unwrap();
        let mask = BinaryMask::empty(15, 16).unwrap();
        data[0] = Sample::new(
            odd,
            make_targets(&mask, DistanceMapKind::D1, ContourRadius::Fixed(1)).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            train_toy(&data, &TrainConfig::default()),
            Err(Error::OddDimension { .. })
        ));
    }
}
