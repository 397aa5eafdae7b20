//! The multi-task head and a deliberately small encoder-decoder to drive it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::loss::{HeadConfig, HeadVariant, LossWeights, PredictionTriple};
use crate::targets::TargetBundle;
use crate::tensor::Tensor;

/// Weights `[out, in, 3, 3]` and bias `[out]` of one 3×3 convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    /// Weights uniform in `±sqrt(1 / fan_in)` with `fan_in = 9·in`; zero bias.
    pub fn init(out_channels: usize, in_channels: usize, rng: &mut impl Rng) -> Self {
        let bound = (1.0 / (9 * in_channels) as f64).sqrt();
        let n = out_channels * in_channels * 9;
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Tensor::new([out_channels, in_channels, 3, 3], data).expect("length matches"),
            bias: Tensor::zeros([out_channels]),
        }
    }

    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            weight: Tensor::zeros([out_channels, in_channels, 3, 3]),
            bias: Tensor::zeros([out_channels]),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.bias.len()
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    fn bind(&self, g: &mut Graph, vars: &mut Vec<Var>) {
        vars.push(g.param(self.weight.clone()));
        vars.push(g.param(self.bias.clone()));
    }
}

/// Pops `(weight, bias)` nodes off a parameter list and applies the conv.
fn conv_next(g: &mut Graph, x: Var, params: &mut std::slice::Iter<'_, Var>) -> Result<Var> {
    match (params.next(), params.next()) {
        (Some(&k), Some(&b)) => g.conv2d(x, k, b),
        _ => Err(Error::InvalidArgument("too few parameter nodes".into())),
    }
}

/// Head outputs as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutputs {
    pub mask: Var,
    pub contour: Option<Var>,
    pub distance: Option<Var>,
}

/// Parallel 3×3 convolutions over one shared feature map: a mask
/// classifier, a contour classifier and a distance regressor (per variant).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvMcdHead {
    config: HeadConfig,
    pub mask: ConvLayer,
    pub contour: Option<ConvLayer>,
    pub distance: Option<ConvLayer>,
}

impl ConvMcdHead {
    pub fn new(config: HeadConfig, rng: &mut impl Rng) -> Self {
        let [m, c, d] = config.head_channels();
        let k = config.in_channels();
        Self {
            config,
            mask: ConvLayer::init(m.expect("mask head always present"), k, rng),
            contour: c.map(|c| ConvLayer::init(c, k, rng)),
            distance: d.map(|d| ConvLayer::init(d, k, rng)),
        }
    }

    /// All weights and biases zero.
    pub fn zeroed(config: HeadConfig) -> Self {
        let [m, c, d] = config.head_channels();
        let k = config.in_channels();
        Self {
            config,
            mask: ConvLayer::zeros(m.expect("mask head always present"), k),
            contour: c.map(|c| ConvLayer::zeros(c, k)),
            distance: d.map(|d| ConvLayer::zeros(d, k)),
        }
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        std::iter::once(&self.mask)
            .chain(self.contour.as_ref())
            .chain(self.distance.as_ref())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        std::iter::once(&mut self.mask)
            .chain(self.contour.as_mut())
            .chain(self.distance.as_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Registers every head parameter as a graph leaf, mask head first.
    pub fn bind_parameters(&self, g: &mut Graph, vars: &mut Vec<Var>) {
        for l in self.layers() {
            l.bind(g, vars);
        }
    }

    /// Applies every head to the same `features` node, reading weights from
    /// `params` (as produced by [`bind_parameters`](Self::bind_parameters)).
    pub fn forward_with(
        &self,
        g: &mut Graph,
        features: Var,
        params: &mut std::slice::Iter<'_, Var>,
    ) -> Result<HeadOutputs> {
        let (k, _, _) = g.value(features).chw()?;
        if k != self.config.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "head expects {} feature channels, got {k}",
                self.config.in_channels()
            )));
        }
        let mask = conv_next(g, features, params)?;
        let contour = match self.contour {
            Some(_) => Some(conv_next(g, features, params)?),
            None => None,
        };
        let distance = match self.distance {
            Some(_) => Some(conv_next(g, features, params)?),
            None => None,
        };
        Ok(HeadOutputs {
            mask,
            contour,
            distance,
        })
    }

    /// Binds the head parameters and applies the head to `features`.
    pub fn forward_graph(&self, g: &mut Graph, features: Var) -> Result<(HeadOutputs, Vec<Var>)> {
        let mut vars = Vec::new();
        self.bind_parameters(g, &mut vars);
        let out = self.forward_with(g, features, &mut vars.iter())?;
        Ok((out, vars))
    }

    /// Raw logits for a `[K, H, W]` feature tensor.
    pub fn forward(&self, features: &Tensor) -> Result<PredictionTriple> {
        let mut g = Graph::new();
        let x = g.constant(features.clone());
        let (out, _) = self.forward_graph(&mut g, x)?;
        Ok(outputs_to_triple(&g, &out))
    }
}

pub fn outputs_to_triple(g: &Graph, out: &HeadOutputs) -> PredictionTriple {
    PredictionTriple {
        mask_logits: g.value(out.mask).clone(),
        contour_logits: out.contour.map(|v| g.value(v).clone()),
        distance_raw: out.distance.map(|v| g.value(v).clone()),
    }
}

/// Loss nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub mask: Var,
    pub contour: Option<Var>,
    pub distance: Option<Var>,
}

/// Builds the weighted multi-task loss on top of head outputs. Softmax and
/// sigmoid are applied here; the heads stay linear.
pub fn loss_graph(
    g: &mut Graph,
    out: &HeadOutputs,
    targets: &TargetBundle,
    weights: &LossWeights,
) -> Result<LossVars> {
    weights.validate()?;
    let probs = g.softmax(out.mask)?;
    let mask = g.nll(probs, &targets.mask)?;
    let contour = match out.contour {
        Some(v) => {
            let p = g.softmax(v)?;
            Some(g.nll(p, &targets.contour)?)
        }
        None => None,
    };
    let distance = match out.distance {
        Some(v) => {
            let s = g.sigmoid(v);
            Some(g.mse(s, &targets.distance)?)
        }
        None => None,
    };
    let mut total = g.scale(mask, weights.mask);
    if let Some(c) = contour {
        let term = g.scale(c, weights.contour);
        total = g.add(total, term)?;
    }
    if let Some(d) = distance {
        let term = g.scale(d, weights.distance);
        total = g.add(total, term)?;
    }
    Ok(LossVars {
        total,
        mask,
        contour,
        distance,
    })
}

/// Two-level encoder-decoder producing `features` channels at input
/// resolution, followed by a [`ConvMcdHead`]:
///
/// conv+ReLU ×2 → maxpool 2 → conv+ReLU ×2 → nearest upsample 2 → conv+ReLU ×2 → head.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    pub backbone: Vec<ConvLayer>,
    pub head: ConvMcdHead,
}

/// Position of the 2× downsample in the backbone (after this many convs).
const POOL_AFTER: usize = 2;
/// Position of the 2× upsample in the backbone.
const UPSAMPLE_AFTER: usize = 4;
const BACKBONE_CONVS: usize = 6;

impl ToyNet {
    pub const DEFAULT_FEATURES: usize = 8;

    pub fn new(in_channels: usize, features: usize, variant: HeadVariant, seed: u64) -> Result<Self> {
        if in_channels == 0 || features == 0 {
            return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = (0..BACKBONE_CONVS)
            .map(|i| {
                let cin = if i == 0 { in_channels } else { features };
                ConvLayer::init(features, cin, &mut rng)
            })
            .collect();
        let head = ConvMcdHead::new(HeadConfig::new(features, variant)?, &mut rng);
        Ok(Self { backbone, head })
    }

    pub fn variant(&self) -> HeadVariant {
        self.head.config().variant()
    }

    pub fn in_channels(&self) -> usize {
        self.backbone[0].in_channels()
    }

    /// Parameters in a fixed order: backbone convs, then mask, contour and
    /// distance heads; weight before bias.
    pub fn parameters(&self) -> Vec<&Tensor> {
        self.backbone
            .iter()
            .chain(self.head.layers())
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.backbone
            .iter_mut()
            .chain(self.head.layers_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Parameter names matching [`parameters`](Self::parameters).
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.backbone.len() {
            names.push(format!("backbone.{i}.weight"));
            names.push(format!("backbone.{i}.bias"));
        }
        for (name, present) in [
            ("mask", true),
            ("contour", self.head.contour.is_some()),
            ("distance", self.head.distance.is_some()),
        ] {
            if present {
                names.push(format!("head.{name}.weight"));
                names.push(format!("head.{name}.bias"));
            }
        }
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Registers all parameters as graph leaves in
    /// [`parameters`](Self::parameters) order.
    pub fn bind_parameters(&self, g: &mut Graph) -> Vec<Var> {
        let mut vars = Vec::with_capacity(2 * (BACKBONE_CONVS + 3));
        for l in &self.backbone {
            l.bind(g, &mut vars);
        }
        self.head.bind_parameters(g, &mut vars);
        vars
    }

    /// Forward pass on `image: [Cin, H, W]` using existing parameter nodes.
    pub fn forward_with(&self, g: &mut Graph, image: Var, params: &[Var]) -> Result<HeadOutputs> {
        let mut params = params.iter();
        let mut x = image;
        for i in 0..self.backbone.len() {
            if i == POOL_AFTER {
                x = g.maxpool2(x)?;
            }
            if i == UPSAMPLE_AFTER {
                x = g.upsample_nearest2(x)?;
            }
            let y = conv_next(g, x, &mut params)?;
            x = g.relu(y);
        }
        self.head.forward_with(g, x, &mut params)
    }

    /// Binds the parameters and runs the forward pass. Returns head outputs
    /// and the parameter nodes in [`parameters`](Self::parameters) order.
    pub fn forward_graph(&self, g: &mut Graph, image: Var) -> Result<(HeadOutputs, Vec<Var>)> {
        let vars = self.bind_parameters(g);
        let out = self.forward_with(g, image, &vars)?;
        Ok((out, vars))
    }

    pub fn predict(&self, image: &Tensor) -> Result<PredictionTriple> {
        let mut g = Graph::new();
        let x = g.constant(image.clone());
        let (out, _) = self.forward_graph(&mut g, x)?;
        Ok(outputs_to_triple(&g, &out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::softmax2;

    #[test]
    fn head_shapes_per_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let features = Tensor::filled([32, 6, 5], 0.1);
        for (variant, contour, distance) in [
            (HeadVariant::Mcd, true, true),
            (HeadVariant::Mc, true, false),
            (HeadVariant::Md, false, true),
        ] {
            let head = ConvMcdHead::new(HeadConfig::new(32, variant).unwrap(), &mut rng);
            let p = head.forward(&features).unwrap();
            assert_eq!(p.mask_logits.shape(), &[2, 6, 5]);
            assert_eq!(p.contour_logits.map(|t| t.shape().to_vec()), contour.then(|| vec![2, 6, 5]));
            assert_eq!(p.distance_raw.map(|t| t.shape().to_vec()), distance.then(|| vec![1, 6, 5]));
            assert_eq!(head.parameter_count(), head.config().parameter_count());
        }
    }

    #[test]
    fn zero_head_gives_uniform_probabilities() {
        let head = ConvMcdHead::zeroed(HeadConfig::new(4, HeadVariant::Mcd).unwrap());
        let p = head.forward(&Tensor::filled([4, 3, 3], 0.7)).unwrap();
        assert!(p.mask_logits.data().iter().all(|&v| v == 0.0));
        let s = softmax2(&p.contour_logits.unwrap()).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn head_rejects_wrong_channel_count() {
        let head = ConvMcdHead::zeroed(HeadConfig::new(4, HeadVariant::Mcd).unwrap());
        assert!(head.forward(&Tensor::zeros([3, 3, 3])).is_err());
    }

    #[test]
    fn toynet_preserves_spatial_shape() {
        let net = ToyNet::new(1, 8, HeadVariant::Mcd, 7).unwrap();
        for (h, w) in [(8, 8), (16, 12), (32, 32)] {
            let p = net.predict(&Tensor::filled([1, h, w], 0.5)).unwrap();
            assert_eq!(p.mask_logits.shape(), &[2, h, w]);
            assert_eq!(p.distance_raw.unwrap().shape(), &[1, h, w]);
        }
        assert!(net.predict(&Tensor::zeros([1, 9, 8])).is_err());
    }

    #[test]
    fn toynet_init_is_seeded() {
        let a = ToyNet::new(1, 8, HeadVariant::Mcd, 3).unwrap();
        let b = ToyNet::new(1, 8, HeadVariant::Mcd, 3).unwrap();
        let c = ToyNet::new(1, 8, HeadVariant::Mcd, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.parameter_names().len(), a.parameters().len());
        let bound = (1.0f64 / 9.0).sqrt();
        assert!(a.backbone[0].weight.data().iter().all(|v| v.abs() < bound));
    }
}
