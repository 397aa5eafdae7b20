//! Finite-difference verification of every differentiable operation.
//!
//! Each check builds a small graph from random inputs, back-propagates, and
//! compares every gradient entry with a central difference. Inputs are drawn
//! away from non-smooth points: ReLU inputs satisfy `|x| > 1e-3` and max-pool
//! windows have a clear winner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Fault, Graph, Var};
use crate::error::Result;
use crate::loss::{HeadConfig, HeadVariant, LossWeights};
use crate::model::{loss_graph, ConvMcdHead, ToyNet};
use crate::raster::{BinaryMask, ImageGrid};
use crate::targets::{DistanceMap, DistanceMapKind, TargetBundle};
use crate::tensor::Tensor;

/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-5;
/// Relative errors are `|a - n| / max(|a|, |n|, FLOOR)`; entries whose
/// gradient is below the floor are compared in absolute terms instead.
pub const DENOMINATOR_FLOOR: f64 = 1e-4;

/// Names of all registered checks, in report order.
pub const CHECK_NAMES: [&str; 13] = [
    "conv2d",
    "relu",
    "maxpool2",
    "upsample_nearest2",
    "softmax",
    "sigmoid",
    "nll",
    "mse",
    "scale",
    "add",
    "weighted_sum",
    "head_total_loss",
    "toynet_total_loss",
];

#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    /// Number of gradient entries compared.
    pub entries: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<OpCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&OpCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

type Build<'a> = dyn Fn(&mut Graph, &[Var]) -> Result<Var> + 'a;

/// Maximum relative error between backprop and central differences over
/// every entry of every input.
pub fn check_gradients(inputs: &[Tensor], build: &Build<'_>, fault: Option<Fault>) -> Result<(f64, usize)> {
    let new_graph = || fault.map_or_else(Graph::new, Graph::with_fault);
    let mut g = new_graph();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = build(&mut g, &vars)?;
    g.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            g.grad(v)
                .map_or_else(|| vec![0.0; g.value(v).len()], |t| t.data().to_vec())
        })
        .collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let root = build(&mut g, &vars)?;
        Ok(g.scalar(root))
    };

    let mut worst = 0.0f64;
    let mut count = 0;
    let mut probe = inputs.to_vec();
    for (i, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + STEP;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - STEP;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(a, numeric));
            count += 1;
        }
    }
    Ok((worst, count))
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
        .expect("length matches")
}

/// Values with `|x|` in `[0.1, 1)` and random sign.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("length matches")
}

/// Distinct values spaced at least 0.05 apart, in random order.
fn distinct(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 + rng.random_range(0.0..0.05)).collect();
    for i in (1..n).rev() {
        values.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), values).expect("length matches")
}

fn random_mask(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.5)).expect("valid dims")
}

fn random_targets(rng: &mut impl Rng, w: usize, h: usize) -> TargetBundle {
    let grid = ImageGrid::from_fn(w, h, |_, _| rng.random_range(0.0..1.0)).expect("valid dims");
    TargetBundle {
        mask: random_mask(rng, w, h),
        contour: random_mask(rng, w, h),
        distance: DistanceMap {
            grid,
            kind: DistanceMapKind::D3,
            normalized: true,
            source_empty: false,
        },
    }
}

pub fn gradcheck_all(seed: u64) -> GradcheckReport {
    gradcheck_with(seed, None)
}

/// Runs every registered check. `fault` injects a known gradient bug (for
/// negative controls). Errors inside a check are reported as a failure with
/// infinite error.
pub fn gradcheck_with(seed: u64, fault: Option<Fault>) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = CHECK_NAMES
        .iter()
        .map(|&name| {
            let outcome = run_check(name, &mut rng, fault);
            let (max_rel_error, entries) = outcome.unwrap_or((f64::INFINITY, 0));
            OpCheck {
                name,
                max_rel_error,
                entries,
                passed: max_rel_error < TOLERANCE,
            }
        })
        .collect();
    GradcheckReport { checks }
}

fn run_check(name: &str, rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<(f64, usize)> {
    let (h, w) = (6, 6);
    match name {
        "conv2d" => {
            let x = uniform(rng, &[1, h, w], -1.0, 1.0);
            let k = uniform(rng, &[3, 1, 3, 3], -1.0, 1.0);
            let b = uniform(rng, &[3], -1.0, 1.0);
            let proj = uniform(rng, &[3, h, w], -1.0, 1.0);
            check_gradients(
                &[x, k, b],
                &|g, v| {
                    let y = g.conv2d(v[0], v[1], v[2])?;
                    g.weighted_sum(y, &proj)
                },
                fault,
            )
        }
        "relu" => unary(away_from_zero(rng, &[2, h, w]), rng, fault, |g, x| Ok(g.relu(x))),
        "maxpool2" => unary(distinct(rng, &[2, h, w]), rng, fault, |g, x| g.maxpool2(x)),
        "upsample_nearest2" => {
            unary(uniform(rng, &[2, 3, 3], -1.0, 1.0), rng, fault, |g, x| g.upsample_nearest2(x))
        }
        "softmax" => unary(uniform(rng, &[3, 4, 4], -2.0, 2.0), rng, fault, |g, x| g.softmax(x)),
        "sigmoid" => unary(uniform(rng, &[1, 4, 4], -3.0, 3.0), rng, fault, |g, x| Ok(g.sigmoid(x))),
        "nll" => {
            let probs = uniform(rng, &[2, 4, 4], 0.05, 0.95);
            let labels = random_mask(rng, 4, 4);
            check_gradients(&[probs], &|g, v| g.nll(v[0], &labels), fault)
        }
        "mse" => {
            let pred = uniform(rng, &[1, 4, 4], 0.0, 1.0);
            let target = random_targets(rng, 4, 4).distance;
            check_gradients(&[pred], &|g, v| g.mse(v[0], &target), fault)
        }
        "scale" => unary(uniform(rng, &[1, 3, 3], -1.0, 1.0), rng, fault, |g, x| Ok(g.scale(x, -1.7))),
        "add" => {
            let a = uniform(rng, &[1, 3, 3], -1.0, 1.0);
            let b = uniform(rng, &[1, 3, 3], -1.0, 1.0);
            let proj = uniform(rng, &[1, 3, 3], -1.0, 1.0);
            check_gradients(
                &[a, b],
                &|g, v| {
                    let s = g.add(v[0], v[1])?;
                    g.weighted_sum(s, &proj)
                },
                fault,
            )
        }
        "weighted_sum" => {
            let x = uniform(rng, &[2, 3, 3], -1.0, 1.0);
            let proj = uniform(rng, &[2, 3, 3], -1.0, 1.0);
            check_gradients(&[x], &|g, v| g.weighted_sum(v[0], &proj), fault)
        }
        "head_total_loss" => check_head(rng, fault),
        "toynet_total_loss" => check_toynet(rng, fault),
        other => unreachable!("unregistered check {other}"),
    }
}

/// Checks a tensor-valued op through a random linear projection to a scalar.
fn unary(
    x: Tensor,
    rng: &mut ChaCha8Rng,
    fault: Option<Fault>,
    op: impl Fn(&mut Graph, Var) -> Result<Var>,
) -> Result<(f64, usize)> {
    let mut probe = Graph::new();
    let pv = probe.constant(x.clone());
    let out = op(&mut probe, pv)?;
    let proj = uniform(rng, probe.value(out).shape(), -1.0, 1.0);
    check_gradients(
        &[x],
        &|g, v| {
            let y = op(g, v[0])?;
            g.weighted_sum(y, &proj)
        },
        fault,
    )
}

/// Features → MCD head (K = 4) → softmax/sigmoid → weighted total loss, with
/// respect to the features and every head parameter.
fn check_head(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<(f64, usize)> {
    let (k, h, w) = (4, 5, 5);
    let head = ConvMcdHead::new(HeadConfig::new(k, HeadVariant::Mcd)?, rng);
    let features = uniform(rng, &[k, h, w], -1.0, 1.0);
    let targets = random_targets(rng, w, h);
    let weights = LossWeights::new(1.0, 0.7, 1.3)?;
    let mut inputs = vec![features];
    for l in head.layers() {
        inputs.push(l.weight.clone());
        inputs.push(uniform(rng, l.bias.shape(), -0.5, 0.5));
    }
    check_gradients(
        &inputs,
        &|g, v| {
            let out = head.forward_with(g, v[0], &mut v[1..].iter())?;
            Ok(loss_graph(g, &out, &targets, &weights)?.total)
        },
        fault,
    )
}

/// Full ToyNet on an 8×8 input. Initializations are drawn until every ReLU
/// input and max-pool gap clears the kink margin.
fn check_toynet(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<(f64, usize)> {
    const KINK_MARGIN: f64 = 1e-4;
    let (h, w) = (8, 8);
    let targets = random_targets(rng, w, h);
    let weights = LossWeights::default();
    let (net, image) = loop {
        let mut net = ToyNet::new(1, 4, HeadVariant::Mcd, rng.random())?;
        for p in net.parameters_mut() {
            if p.shape().len() == 1 {
                for b in p.data_mut() {
                    *b = rng.random_range(-0.1..0.1);
                }
            }
        }
        let image = uniform(rng, &[1, h, w], 0.0, 1.0);
        let mut g = Graph::new();
        let x = g.constant(image.clone());
        net.forward_graph(&mut g, x)?;
        if g.kink_margin() > KINK_MARGIN {
            break (net, image);
        }
    };
    let params: Vec<Tensor> = net.parameters().into_iter().cloned().collect();
    check_gradients(
        &params,
        &|g, v| {
            let x = g.constant(image.clone());
            let out = net.forward_with(g, x, v)?;
            Ok(loss_graph(g, &out, &targets, &weights)?.total)
        },
        fault,
    )
}
