use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{
    conv_backward, conv_forward, dense_backward, dense_forward, maxpool_forward, maxpool_margin, ConvShape, LayerSpec,
};
use super::loss::LossKind;
use crate::distributions::{DiagonalGaussian, Sample};
use crate::error::{Error, Result};
use crate::rng::Seed;

/// A feedforward network: a validated layer stack plus one flat weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<LayerSpec>,
    weights: Vec<f64>,
    offsets: Vec<usize>,
    input_dim: usize,
    classes: usize,
}

/// Per-layer inputs recorded by a forward pass.
struct Trace {
    inputs: Vec<Vec<f64>>,
    pool_index: Vec<Option<Vec<usize>>>,
    logits: Vec<f64>,
}

impl Network {
    /// A zero-weight network. The final layer width is the class count.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be ≥ 1"));
        }
        if layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        let mut width = input_dim;
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut total = 0;
        for (i, l) in layers.iter().enumerate() {
            width = l
                .output_width(width)
                .map_err(|e| Error::invalid(format!("layer {i}: {e}")))?;
            offsets.push(total);
            total += l.param_count();
        }
        offsets.push(total);
        if width < 2 {
            return Err(Error::invalid(format!("network outputs {width} logits; need k ≥ 2")));
        }
        Ok(Self {
            layers,
            weights: vec![0.0; total],
            offsets,
            input_dim,
            classes: width,
        })
    }

    /// Single dense layer without bias: logits are exactly `W x`.
    pub fn linear(d: usize, k: usize) -> Result<Self> {
        Self::new(
            d,
            vec![LayerSpec::Dense {
                inputs: d,
                outputs: k,
                bias: false,
            }],
        )
    }

    /// Dense/ReLU stack with biased layers; `hidden` empty gives a biased linear model.
    pub fn mlp(d: usize, hidden: &[usize], k: usize) -> Result<Self> {
        let mut layers = Vec::new();
        let mut prev = d;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                inputs: prev,
                outputs: h,
                bias: true,
            });
            layers.push(LayerSpec::Relu);
            prev = h;
        }
        layers.push(LayerSpec::Dense {
            inputs: prev,
            outputs: k,
            bias: true,
        });
        Self::new(d, layers)
    }

    /// Conv → ReLU → 2×2 max-pool per entry of `conv_channels`, then two dense layers.
    pub fn cnn(
        channels: usize,
        height: usize,
        width: usize,
        conv_channels: &[usize],
        kernel: usize,
        dense_hidden: usize,
        k: usize,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let (mut c, mut h, mut w) = (channels, height, width);
        for &out in conv_channels {
            layers.push(LayerSpec::Conv2d {
                in_channels: c,
                out_channels: out,
                kernel,
                height: h,
                width: w,
            });
            layers.push(LayerSpec::Relu);
            c = out;
            h = h
                .checked_sub(kernel - 1)
                .ok_or_else(|| Error::invalid("image too small for kernel"))?;
            w = w
                .checked_sub(kernel - 1)
                .ok_or_else(|| Error::invalid("image too small for kernel"))?;
            layers.push(LayerSpec::MaxPool2d {
                channels: c,
                height: h,
                width: w,
            });
            h /= 2;
            w /= 2;
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense {
            inputs: c * h * w,
            outputs: dense_hidden,
            bias: true,
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dense {
            inputs: dense_hidden,
            outputs: k,
            bias: true,
        });
        Self::new(channels * height * width, layers)
    }

    /// A copy of this architecture carrying `weights`.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "expected {} weights, got {}",
                self.weights.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::invalid(format!("weight {i} is not finite")));
        }
        Ok(Self {
            weights,
            ..self.clone()
        })
    }

    /// Centered uniform initialization with half-width `1/√fan_in` per layer.
    pub fn init_uniform(&self, seed: Seed) -> Self {
        let mut rng = seed.rng(0);
        let mut weights = vec![0.0; self.weights.len()];
        for (i, l) in self.layers.iter().enumerate() {
            let fan_in = l.fan_in();
            if fan_in == 0 {
                continue;
            }
            let a = 1.0 / (fan_in as f64).sqrt();
            for w in &mut weights[self.offsets[i]..self.offsets[i + 1]] {
                *w = rng.random_range(-a..a);
            }
        }
        Self {
            weights,
            ..self.clone()
        }
    }

    /// A copy with weights drawn from `prior`.
    pub fn sample_from<R: Rng + ?Sized>(&self, prior: &DiagonalGaussian, rng: &mut R) -> Result<Self> {
        if prior.dim() != self.weights.len() {
            return Err(Error::invalid(format!(
                "prior has dimension {} for {} weights",
                prior.dim(),
                self.weights.len()
            )));
        }
        self.with_weights(prior.draw(rng))
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of dense and convolutional layers.
    pub fn depth(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. }))
            .count()
    }

    /// The matrix of a network that is a single bias-free dense layer.
    pub fn as_linear(&self) -> Option<&[f64]> {
        match self.layers.as_slice() {
            [LayerSpec::Dense { bias: false, .. }] => Some(&self.weights),
            _ => None,
        }
    }

    fn layer_params(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "input has length {} but the network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pool_index = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let p = self.layer_params(i);
            let (next, pidx) = match *l {
                LayerSpec::Dense { inputs, outputs, bias } => (dense_forward(p, inputs, outputs, bias, &cur), None),
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    height,
                    width,
                } => {
                    let s = ConvShape {
                        cin: in_channels,
                        cout: out_channels,
                        k: kernel,
                        h: height,
                        w: width,
                    };
                    (conv_forward(p, &s, &cur), None)
                }
                LayerSpec::Relu => (cur.iter().map(|v| v.max(0.0)).collect(), None),
                LayerSpec::MaxPool2d {
                    channels,
                    height,
                    width,
                } => {
                    let (y, idx) = maxpool_forward(channels, height, width, &cur);
                    (y, Some(idx))
                }
                LayerSpec::Flatten => (cur.clone(), None),
            };
            inputs.push(std::mem::replace(&mut cur, next));
            pool_index.push(pidx);
        }
        if let Some(i) = cur.iter().position(|v| !v.is_finite()) {
            return Err(Error::eval(format!("logit {i} is {}", cur[i])));
        }
        Ok(Trace {
            inputs,
            pool_index,
            logits: cur,
        })
    }

    /// Backpropagates `dlogits`; returns `∂/∂x` and accumulates `∂/∂w` into `gw` when given.
    fn backward(&self, trace: &Trace, dlogits: Vec<f64>, mut gw: Option<&mut [f64]>) -> Vec<f64> {
        let mut d = dlogits;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &trace.inputs[i];
            let p = self.layer_params(i);
            let gslice = gw.as_deref_mut().map(|g| &mut g[self.offsets[i]..self.offsets[i + 1]]);
            d = match *l {
                LayerSpec::Dense { inputs, outputs, bias } => dense_backward(p, inputs, outputs, bias, x, &d, gslice),
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    height,
                    width,
                } => {
                    let s = ConvShape {
                        cin: in_channels,
                        cout: out_channels,
                        k: kernel,
                        h: height,
                        w: width,
                    };
                    conv_backward(p, &s, x, &d, gslice)
                }
                // subgradient 0 at the kink
                LayerSpec::Relu => d.iter().zip(x).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect(),
                LayerSpec::MaxPool2d { .. } => {
                    let mut dx = vec![0.0; x.len()];
                    for (g, &q) in d.iter().zip(trace.pool_index[i].as_ref().unwrap()) {
                        dx[q] += g;
                    }
                    dx
                }
                LayerSpec::Flatten => d,
            };
        }
        d
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.logits)
    }

    pub fn loss(&self, x: &[f64], y: usize, kind: LossKind) -> Result<f64> {
        kind.value(&self.forward(x)?, y)
    }

    /// Loss and `∇_x ℓ(w, x, y)` from one forward/backward pass.
    pub fn loss_and_input_gradient(&self, x: &[f64], y: usize, kind: LossKind) -> Result<(f64, Vec<f64>)> {
        let tr = self.trace(x)?;
        let (v, dz) = kind.value_and_grad(&tr.logits, y)?;
        let gx = self.backward(&tr, dz, None);
        if gx.iter().any(|g| !g.is_finite()) {
            return Err(Error::eval("non-finite input gradient"));
        }
        Ok((v, gx))
    }

    pub fn input_gradient(&self, x: &[f64], y: usize, kind: LossKind) -> Result<Vec<f64>> {
        Ok(self.loss_and_input_gradient(x, y, kind)?.1)
    }

    /// Mean loss and mean weight gradient over `batch`.
    pub fn loss_and_weight_gradient(&self, batch: &[Sample], kind: LossKind) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut g = vec![0.0; self.weights.len()];
        let mut total = 0.0;
        for s in batch {
            let tr = self.trace(&s.x)?;
            let (v, dz) = kind.value_and_grad(&tr.logits, s.y)?;
            total += v;
            self.backward(&tr, dz, Some(&mut g));
        }
        let n = batch.len() as f64;
        for v in &mut g {
            *v /= n;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::eval("non-finite weight gradient"));
        }
        Ok((total / n, g))
    }

    pub fn weight_gradient(&self, batch: &[Sample], kind: LossKind) -> Result<Vec<f64>> {
        Ok(self.loss_and_weight_gradient(batch, kind)?.1)
    }

    /// Mean loss over `data`.
    pub fn mean_loss(&self, data: &[Sample], kind: LossKind) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let mut total = 0.0;
        for s in data {
            total += self.loss(&s.x, s.y, kind)?;
        }
        Ok(total / data.len() as f64)
    }

    /// Signature of every piecewise choice made at `x` (ReLU signs, pooling winners,
    /// hinge argmax) and the smallest margin to changing one of them.
    pub fn kink_profile(&self, x: &[f64], y: usize, kind: LossKind) -> Result<(Vec<usize>, f64)> {
        let tr = self.trace(x)?;
        let mut sig = Vec::new();
        let mut margin = f64::INFINITY;
        for (i, l) in self.layers.iter().enumerate() {
            let inp = &tr.inputs[i];
            match *l {
                LayerSpec::Relu => {
                    for v in inp {
                        sig.push(usize::from(*v > 0.0));
                        margin = margin.min(v.abs());
                    }
                }
                LayerSpec::MaxPool2d {
                    channels,
                    height,
                    width,
                } => {
                    sig.extend_from_slice(tr.pool_index[i].as_ref().unwrap());
                    margin = margin.min(maxpool_margin(channels, height, width, inp));
                }
                _ => {}
            }
        }
        if kind == LossKind::MulticlassHinge {
            let (_, g) = kind.value_and_grad(&tr.logits, y)?;
            sig.extend(g.iter().map(|v| (v + 1.0) as usize));
            margin = margin.min(kind.kink_distance(&tr.logits, y));
        }
        Ok((sig, margin))
    }
}

/// Hidden width giving a `depth`-layer ReLU MLP roughly `budget` parameters.
/// Depth 1 has no hidden layer and returns 0.
pub fn equal_param_width(d: usize, k: usize, depth: usize, budget: usize) -> usize {
    if depth <= 1 {
        return 0;
    }
    // params(h) = (d+1)h + (depth−2)(h² + h) + (h+1)k
    let a = (depth - 2) as f64;
    let b = (d + 1 + k) as f64 + a;
    let c = k as f64 - budget as f64;
    let h = if a == 0.0 {
        -c / b
    } else {
        (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
    };
    h.round().max(1.0) as usize
}
