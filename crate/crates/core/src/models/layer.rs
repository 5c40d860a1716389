use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a feedforward network. Activations are flat vectors; image
/// tensors are laid out channel-major (`c·H·W + i·W + j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `y = W x (+ b)`, `W` stored row-major `outputs × inputs`, then `b`.
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    /// Valid, stride-1 convolution over a `in_channels × height × width` input.
    /// Kernel stored `out × in × k × k`, followed by one bias per output channel.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        height: usize,
        width: usize,
    },
    Relu,
    /// 2×2 max-pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2d {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs, bias } => inputs * outputs + if bias { outputs } else { 0 },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerSpec::Relu | LayerSpec::MaxPool2d { .. } | LayerSpec::Flatten => 0,
        }
    }

    /// Fan-in used for weight initialization.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    /// Output width given the incoming activation width.
    pub fn output_width(&self, input: usize) -> Result<usize> {
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => {
                expect_width("dense", inputs, input)?;
                Ok(outputs)
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                height,
                width,
            } => {
                expect_width("conv2d", in_channels * height * width, input)?;
                if kernel == 0 || kernel > height || kernel > width {
                    return Err(Error::invalid(format!(
                        "conv2d kernel {kernel} does not fit a {height}×{width} input"
                    )));
                }
                Ok(out_channels * (height - kernel + 1) * (width - kernel + 1))
            }
            LayerSpec::MaxPool2d {
                channels,
                height,
                width,
            } => {
                expect_width("maxpool2d", channels * height * width, input)?;
                if height < 2 || width < 2 {
                    return Err(Error::invalid("maxpool2d needs at least a 2×2 input"));
                }
                Ok(channels * (height / 2) * (width / 2))
            }
            LayerSpec::Relu | LayerSpec::Flatten => Ok(input),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
        }
    }
}

fn expect_width(kind: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!(
            "{kind} layer expects {expected} inputs but receives {got}"
        )));
    }
    Ok(())
}

pub(crate) fn dense_forward(w: &[f64], inputs: usize, outputs: usize, bias: bool, x: &[f64]) -> Vec<f64> {
    let (mat, b) = w.split_at(inputs * outputs);
    (0..outputs)
        .map(|o| {
            let row = &mat[o * inputs..(o + 1) * inputs];
            let s: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            if bias {
                s + b[o]
            } else {
                s
            }
        })
        .collect()
}

/// Returns `∂/∂x` and accumulates `∂/∂w` into `gw` when given.
pub(crate) fn dense_backward(
    w: &[f64],
    inputs: usize,
    outputs: usize,
    bias: bool,
    x: &[f64],
    dy: &[f64],
    gw: Option<&mut [f64]>,
) -> Vec<f64> {
    let mat = &w[..inputs * outputs];
    let mut dx = vec![0.0; inputs];
    for o in 0..outputs {
        let row = &mat[o * inputs..(o + 1) * inputs];
        for (d, r) in dx.iter_mut().zip(row) {
            *d += r * dy[o];
        }
    }
    if let Some(gw) = gw {
        let (gmat, gb) = gw.split_at_mut(inputs * outputs);
        for o in 0..outputs {
            if dy[o] == 0.0 {
                continue;
            }
            for (g, xi) in gmat[o * inputs..(o + 1) * inputs].iter_mut().zip(x) {
                *g += dy[o] * xi;
            }
            if bias {
                gb[o] += dy[o];
            }
        }
    }
    dx
}

pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    fn oh(&self) -> usize {
        self.h - self.k + 1
    }
    fn ow(&self) -> usize {
        self.w - self.k + 1
    }
}

pub(crate) fn conv_forward(p: &[f64], s: &ConvShape, x: &[f64]) -> Vec<f64> {
    let (oh, ow, k) = (s.oh(), s.ow(), s.k);
    let (kern, bias) = p.split_at(s.cout * s.cin * k * k);
    let mut y = vec![0.0; s.cout * oh * ow];
    for o in 0..s.cout {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[o];
                for c in 0..s.cin {
                    for u in 0..k {
                        let krow = &kern[((o * s.cin + c) * k + u) * k..][..k];
                        let xrow = &x[(c * s.h + i + u) * s.w + j..][..k];
                        acc += krow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                y[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    y
}

pub(crate) fn conv_backward(p: &[f64], s: &ConvShape, x: &[f64], dy: &[f64], mut gw: Option<&mut [f64]>) -> Vec<f64> {
    let (oh, ow, k) = (s.oh(), s.ow(), s.k);
    let nk = s.cout * s.cin * k * k;
    let kern = &p[..nk];
    let mut dx = vec![0.0; s.cin * s.h * s.w];
    for o in 0..s.cout {
        for i in 0..oh {
            for j in 0..ow {
                let g = dy[(o * oh + i) * ow + j];
                if g == 0.0 {
                    continue;
                }
                if let Some(gw) = gw.as_deref_mut() {
                    gw[nk + o] += g;
                }
                for c in 0..s.cin {
                    for u in 0..k {
                        let kbase = ((o * s.cin + c) * k + u) * k;
                        let xbase = (c * s.h + i + u) * s.w + j;
                        for v in 0..k {
                            dx[xbase + v] += kern[kbase + v] * g;
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            for v in 0..k {
                                gw[kbase + v] += x[xbase + v] * g;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Pooled values and the flat input index of each window's maximum (first on ties).
pub(crate) fn maxpool_forward(channels: usize, h: usize, w: usize, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(channels * oh * ow);
    let mut idx = Vec::with_capacity(channels * oh * ow);
    for c in 0..channels {
        for i in 0..oh {
            for j in 0..ow {
                let cands = [
                    (c * h + 2 * i) * w + 2 * j,
                    (c * h + 2 * i) * w + 2 * j + 1,
                    (c * h + 2 * i + 1) * w + 2 * j,
                    (c * h + 2 * i + 1) * w + 2 * j + 1,
                ];
                let mut best = cands[0];
                for &q in &cands[1..] {
                    if x[q] > x[best] {
                        best = q;
                    }
                }
                y.push(x[best]);
                idx.push(best);
            }
        }
    }
    (y, idx)
}

/// Smallest gap between a pooling window's maximum and its runner-up.
pub(crate) fn maxpool_margin(channels: usize, h: usize, w: usize, x: &[f64]) -> f64 {
    let (oh, ow) = (h / 2, w / 2);
    let mut margin = f64::INFINITY;
    for c in 0..channels {
        for i in 0..oh {
            for j in 0..ow {
                let mut v = [
                    x[(c * h + 2 * i) * w + 2 * j],
                    x[(c * h + 2 * i) * w + 2 * j + 1],
                    x[(c * h + 2 * i + 1) * w + 2 * j],
                    x[(c * h + 2 * i + 1) * w + 2 * j + 1],
                ];
                v.sort_by(|a, b| b.total_cmp(a));
                margin = margin.min(v[0] - v[1]);
            }
        }
    }
    margin
}
