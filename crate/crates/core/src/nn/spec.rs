use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::layers::conv_out_size;
use crate::{Error, Result};

/// Running-statistics momentum used by residual-block batch norms.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        channels: usize,
        momentum: f64,
        epsilon: f64,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// Basic residual block: two 3×3 conv/bn stages plus a skip path that is
    /// the identity, or a 1×1 conv/bn projection when the channel count or
    /// stride changes.
    Residual {
        channels: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Linear {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn batchnorm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            pad,
        }
    }
}

/// Activation shape of one batch item, `(channels, height, width)`.
pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Stem conv(8, 3×3) → bn → relu → residual(8) → residual(16, stride 2)
    /// → global average pool → linear(16, 2), on 3-channel square inputs.
    pub fn mini_resnet(input_size: usize) -> Self {
        ModelSpec {
            input_channels: 3,
            input_size,
            layers: vec![
                LayerSpec::conv(8, 3, 1, 1),
                LayerSpec::batchnorm(8),
                LayerSpec::Relu,
                LayerSpec::Residual { channels: 8, stride: 1 },
                LayerSpec::Residual { channels: 16, stride: 2 },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Linear { inputs: 16, outputs: 2 },
            ],
        }
    }

    pub fn input_shape(&self) -> Shape {
        (self.input_channels, self.input_size, self.input_size)
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Linear { outputs, .. }) => *outputs,
            _ => 0,
        }
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input_shape()];
        let mut cur = self.input_shape();
        if cur.0 == 0 || cur.1 == 0 || cur.2 == 0 {
            return Err(Error::Shape {
                layer: 0,
                message: format!("empty input shape {cur:?}"),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |message: String| Error::Shape { layer: i, message };
            let (c, h, w) = cur;
            cur = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(err("conv parameters must be positive".into()));
                    }
                    let oh = conv_out_size(h, kernel, stride, pad)
                        .ok_or_else(|| err(format!("kernel {kernel} larger than padded input {h}")))?;
                    let ow = conv_out_size(w, kernel, stride, pad)
                        .ok_or_else(|| err(format!("kernel {kernel} larger than padded input {w}")))?;
                    (out_channels, oh, ow)
                }
                LayerSpec::BatchNorm { channels, momentum, epsilon } => {
                    if channels != c {
                        return Err(err(format!("batchnorm over {channels} channels, input has {c}")));
                    }
                    if !(0.0..=1.0).contains(&momentum) || !(epsilon > 0.0) {
                        return Err(err("batchnorm momentum must be in [0,1] and epsilon positive".into()));
                    }
                    cur
                }
                LayerSpec::Relu => cur,
                LayerSpec::MaxPool { kernel, stride } => {
                    if kernel == 0 || stride == 0 || kernel > h || kernel > w {
                        return Err(err(format!("pool {kernel}/{stride} does not fit {h}x{w}")));
                    }
                    (c, (h - kernel) / stride + 1, (w - kernel) / stride + 1)
                }
                LayerSpec::Residual { channels, stride } => {
                    if channels == 0 || stride == 0 {
                        return Err(err("residual parameters must be positive".into()));
                    }
                    let oh = conv_out_size(h, 3, stride, 1).ok_or_else(|| err("input too small".into()))?;
                    let ow = conv_out_size(w, 3, stride, 1).ok_or_else(|| err("input too small".into()))?;
                    (channels, oh, ow)
                }
                LayerSpec::GlobalAvgPool => (c, 1, 1),
                LayerSpec::Linear { inputs, outputs } => {
                    if inputs != c * h * w {
                        return Err(err(format!("linear expects {inputs} inputs, got {}", c * h * w)));
                    }
                    if outputs == 0 {
                        return Err(err("linear needs at least one output".into()));
                    }
                    (outputs, 1, 1)
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Shape checks plus the classifier contract: the last layer is a
    /// two-output linear layer.
    pub fn validate(&self) -> Result<()> {
        self.shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Linear { outputs: 2, .. }) => Ok(()),
            _ => Err(Error::Shape {
                layer: self.layers.len().saturating_sub(1),
                message: "final layer must be linear with 2 outputs".into(),
            }),
        }
    }

    /// Plain-text descriptor stored in checkpoints; one layer per line.
    pub fn to_descriptor(&self) -> String {
        let mut s = format!("input {} {}\n", self.input_channels, self.input_size);
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv { out_channels, kernel, stride, pad } => {
                    writeln!(s, "conv {out_channels} {kernel} {stride} {pad}")
                }
                LayerSpec::BatchNorm { channels, momentum, epsilon } => {
                    writeln!(s, "batchnorm {channels} {momentum:?} {epsilon:?}")
                }
                LayerSpec::Relu => writeln!(s, "relu"),
                LayerSpec::MaxPool { kernel, stride } => writeln!(s, "maxpool {kernel} {stride}"),
                LayerSpec::Residual { channels, stride } => writeln!(s, "residual {channels} {stride}"),
                LayerSpec::GlobalAvgPool => writeln!(s, "gap"),
                LayerSpec::Linear { inputs, outputs } => writeln!(s, "linear {inputs} {outputs}"),
            }
            .unwrap();
        }
        s
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Format(format!("model descriptor line {line}: {msg}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty descriptor"))?;
        let head: Vec<&str> = first.split_whitespace().collect();
        let (input_channels, input_size) = match head.as_slice() {
            ["input", c, s] => (
                c.parse().map_err(|_| bad(1, "bad input channels"))?,
                s.parse().map_err(|_| bad(1, "bad input size"))?,
            ),
            _ => return Err(bad(1, "expected `input <channels> <size>`")),
        };
        let mut layers = Vec::new();
        for (i, line) in lines {
            let no = i + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let u = |s: &str| s.parse::<usize>().map_err(|_| bad(no, "bad integer"));
            let f = |s: &str| s.parse::<f64>().map_err(|_| bad(no, "bad number"));
            let layer = match parts.as_slice() {
                ["conv", o, k, s, p] => LayerSpec::conv(u(o)?, u(k)?, u(s)?, u(p)?),
                ["batchnorm", c, m, e] => LayerSpec::BatchNorm {
                    channels: u(c)?,
                    momentum: f(m)?,
                    epsilon: f(e)?,
                },
                ["relu"] => LayerSpec::Relu,
                ["maxpool", k, s] => LayerSpec::MaxPool { kernel: u(k)?, stride: u(s)? },
                ["residual", c, s] => LayerSpec::Residual { channels: u(c)?, stride: u(s)? },
                ["gap"] => LayerSpec::GlobalAvgPool,
                ["linear", a, b] => LayerSpec::Linear { inputs: u(a)?, outputs: u(b)? },
                _ => return Err(bad(no, "unknown layer")),
            };
            layers.push(layer);
        }
        Ok(ModelSpec {
            input_channels,
            input_size,
            layers,
        })
    }
}
