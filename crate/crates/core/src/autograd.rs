//! A small tape-based reverse-mode autodiff engine over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node appended after its inputs,
//! so node order is already a topological order and [`Graph::backward`] is a
//! single reverse sweep. Graphs are cheap; build one per training step.

use crate::error::{Error, Result};
use crate::loss::{self, LOG_EPSILON};
use crate::raster::BinaryMask;
use crate::targets::DistanceMap;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Deliberate gradient bugs, used as negative controls for gradient checks.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    ConvBackward,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, k: Var, b: Var },
    Relu(Var),
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2(Var),
    Softmax(Var),
    Sigmoid(Var),
    Nll { probs: Var, labels: Vec<bool> },
    Mse { pred: Var, target: Vec<f64> },
    Scale(Var, f64),
    Add(Var, Var),
    WeightedSum { x: Var, weights: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn with_fault(fault: Fault) -> Self {
        Self {
            nodes: Vec::new(),
            fault: Some(fault),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`backward`](Self::backward) root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// 3×3 cross-correlation, stride 1, zero padding 1.
    ///
    /// `x: [Cin, H, W]`, `k: [Cout, Cin, 3, 3]`, `b: [Cout]` → `[Cout, H, W]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (cin, h, w) = self.value(x).chw()?;
        let ks = self.value(k).shape();
        let cout = ks[0];
        if ks != [cout, cin, 3, 3] || self.value(b).shape() != [cout] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: input {:?}, kernel {:?}, bias {:?}",
                self.value(x).shape(),
                ks,
                self.value(b).shape()
            )));
        }
        let out = conv2d_forward(
            self.value(x).data(),
            cin,
            h,
            w,
            self.value(k).data(),
            self.value(b).data(),
        );
        let value = Tensor::new([cout, h, w], out)?;
        let rg = self.needs(&[x, k, b]);
        Ok(self.push(value, rg, Op::Conv2d { x, k, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.needs(&[x]);
        self.push(value, rg, Op::Relu(x))
    }

    /// 2×2 max pooling with stride 2. Ties go to the first pixel in scan order.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::OddDimension { height: h, width: w });
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let (y, x0) = (2 * oy, 2 * ox);
                    let candidates = [
                        base + y * w + x0,
                        base + y * w + x0 + 1,
                        base + (y + 1) * w + x0,
                        base + (y + 1) * w + x0 + 1,
                    ];
                    let mut best = candidates[0];
                    for &i in &candidates[1..] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new([c, oh, ow], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::MaxPool2 { x, argmax }))
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        let (oh, ow) = (2 * h, 2 * w);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                let row = &src[ch * h * w + (y / 2) * w..][..w];
                for xx in 0..ow {
                    out.push(row[xx / 2]);
                }
            }
        }
        let value = Tensor::new([c, oh, ow], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Upsample2(x)))
    }

    /// Per-pixel softmax over channels.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let value = loss::softmax2(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Softmax(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = loss::sigmoid_tensor(self.value(x));
        let rg = self.needs(&[x]);
        self.push(value, rg, Op::Sigmoid(x))
    }

    /// Mean negative log-likelihood of `labels` under `probs: [C, H, W]`.
    pub fn nll(&mut self, probs: Var, labels: &BinaryMask) -> Result<Var> {
        let l = loss::nll_loss(self.value(probs), labels)?;
        let rg = self.needs(&[probs]);
        Ok(self.push(
            Tensor::new([1], vec![l])?,
            rg,
            Op::Nll {
                probs,
                labels: labels.data().to_vec(),
            },
        ))
    }

    /// Mean squared error against a normalized distance target.
    pub fn mse(&mut self, pred: Var, target: &DistanceMap) -> Result<Var> {
        let l = loss::mse_loss(self.value(pred), target)?;
        let rg = self.needs(&[pred]);
        Ok(self.push(
            Tensor::new([1], vec![l])?,
            rg,
            Op::Mse {
                pred,
                target: target.grid.data().to_vec(),
            },
        ))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.needs(&[x]);
        self.push(value, rg, Op::Scale(x, factor))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    /// `Σ weights[i] · x[i]` as a one-element tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor) -> Result<Var> {
        if self.value(x).len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "weighted sum: {:?} vs {:?}",
                self.value(x).shape(),
                weights.shape()
            )));
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::new([1], vec![s])?,
            rg,
            Op::WeightedSum {
                x,
                weights: weights.data().to_vec(),
            },
        ))
    }

    /// Smallest distance of any ReLU input from 0 and smallest gap between
    /// the winner and runner-up of any max-pool window. Finite-difference
    /// checks are only meaningful when both exceed the step size.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for &v in self.value(*x).data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let (_, _, w) = self.value(*x).chw().expect("checked in forward");
                    let src = self.value(*x).data();
                    for &best in argmax {
                        let (row, col) = (best / w, best % w);
                        let (r0, c0) = (row - row % 2, col - col % 2);
                        for i in [r0 * w + c0, r0 * w + c0 + 1, (r0 + 1) * w + c0, (r0 + 1) * w + c0 + 1] {
                            if i != best {
                                margin = margin.min(src[best] - src[i]);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Back-propagates from a single-element `root`, replacing any gradients
    /// stored by a previous call.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads.into_iter().chain(std::iter::repeat(None))) {
            node.grad = match g {
                Some(g) if node.requires_grad => Some(Tensor::new(node.value.shape().to_vec(), g)?),
                _ => None,
            };
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b } => {
                let xv = self.value(*x);
                let (cin, h, w) = xv.chw().expect("checked in forward");
                let kv = self.value(*k);
                let cout = kv.shape()[0];
                let (dx, mut dk, db) = conv2d_backward(xv.data(), cin, h, w, kv.data(), cout, g);
                if self.fault == Some(Fault::ConvBackward) {
                    dk.iter_mut().for_each(|v| *v *= 1.05);
                }
                self.accumulate(grads, *x, &dx);
                self.accumulate(grads, *k, &dk);
                self.accumulate(grads, *b, &db);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx: Vec<f64> = xv
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] += gv;
                }
                self.accumulate(grads, *x, &dx);
            }
            Op::Upsample2(x) => {
                let (c, h, w) = self.value(*x).chw().expect("checked in forward");
                let (oh, ow) = (2 * h, 2 * w);
                let mut dx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        let grow = &g[ch * oh * ow + y * ow..][..ow];
                        let drow = &mut dx[ch * h * w + (y / 2) * w..][..w];
                        for (xx, &gv) in grow.iter().enumerate() {
                            drow[xx / 2] += gv;
                        }
                    }
                }
                self.accumulate(grads, *x, &dx);
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let (c, h, w) = node.value.chw().expect("checked in forward");
                let plane = h * w;
                let mut dx = vec![0.0; y.len()];
                for p in 0..plane {
                    let dot: f64 = (0..c).map(|k| y[k * plane + p] * g[k * plane + p]).sum();
                    for k in 0..c {
                        let idx = k * plane + p;
                        dx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
                self.accumulate(grads, *x, &dx);
            }
            Op::Sigmoid(x) => {
                let dx: Vec<f64> = node
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gv)| gv * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Nll { probs, labels } => {
                let p = self.value(*probs).data();
                let plane = labels.len();
                let scale = g[0] / plane as f64;
                let mut dp = vec![0.0; p.len()];
                for (i, &fg) in labels.iter().enumerate() {
                    let idx = usize::from(fg) * plane + i;
                    if p[idx] > LOG_EPSILON {
                        dp[idx] = -scale / p[idx];
                    }
                }
                self.accumulate(grads, *probs, &dp);
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred).data();
                let scale = 2.0 * g[0] / p.len() as f64;
                let dp: Vec<f64> = p.iter().zip(target).map(|(&a, &b)| scale * (a - b)).collect();
                self.accumulate(grads, *pred, &dp);
            }
            Op::Scale(x, factor) => {
                let dx: Vec<f64> = g.iter().map(|&v| v * factor).collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g);
                self.accumulate(grads, *b, g);
            }
            Op::WeightedSum { x, weights } => {
                let dx: Vec<f64> = weights.iter().map(|&w| w * g[0]).collect();
                self.accumulate(grads, *x, &dx);
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }
}

/// Valid output range `[lo, hi)` along one axis for kernel offset `d`.
#[inline]
fn valid_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo.min(n), hi)
}

fn conv2d_forward(x: &[f64], cin: usize, h: usize, w: usize, k: &[f64], b: &[f64]) -> Vec<f64> {
    let cout = b.len();
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    for co in 0..cout {
        let out_plane = &mut out[co * plane..(co + 1) * plane];
        out_plane.fill(b[co]);
        for ci in 0..cin {
            let in_plane = &x[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = valid_range(dy, h);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = valid_range(dx, w);
                    if x0 >= x1 {
                        continue;
                    }
                    let wv = k[((co * cin + ci) * 3 + ky) * 3 + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let src = &in_plane[sy * w + (x0 as isize + dx) as usize..][..x1 - x0];
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        for (o, &s) in dst.iter_mut().zip(src) {
                            *o += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv2d_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    k: &[f64],
    cout: usize,
    g: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let mut dx = vec![0.0; cin * plane];
    let mut dk = vec![0.0; cout * cin * 9];
    let mut db = vec![0.0; cout];
    for co in 0..cout {
        let g_plane = &g[co * plane..(co + 1) * plane];
        db[co] = g_plane.iter().sum();
        for ci in 0..cin {
            let in_plane = &x[ci * plane..(ci + 1) * plane];
            let dx_plane = &mut dx[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = valid_range(dy, h);
                for kx in 0..3 {
                    let dxo = kx as isize - 1;
                    let (x0, x1) = valid_range(dxo, w);
                    if x0 >= x1 {
                        continue;
                    }
                    let kidx = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let wv = k[kidx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let off = sy * w + (x0 as isize + dxo) as usize;
                        let grow = &g_plane[y * w + x0..y * w + x1];
                        let src = &in_plane[off..off + (x1 - x0)];
                        let dst = &mut dx_plane[off..off + (x1 - x0)];
                        for ((&gv, &s), d) in grow.iter().zip(src).zip(dst) {
                            acc += gv * s;
                            *d += wv * gv;
                        }
                    }
                    dk[kidx] += acc;
                }
            }
        }
    }
    (dx, dk, db)
}
