use rand::Rng as _;

use super::layers::{self, BnCache, ConvGeometry};
use super::spec::{LayerSpec, ModelSpec, BN_EPSILON, BN_MOMENTUM};
use super::tensor::Tensor4;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    /// Whether SGD updates this array. Running statistics are not trained.
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Vec<f64>,
    /// Empty for the bias-free convolutions inside residual blocks.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BnParams {
    fn new(channels: usize) -> Self {
        BnParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualParams {
    pub conv1: ConvParams,
    pub bn1: BnParams,
    pub conv2: ConvParams,
    pub bn2: BnParams,
    pub projection: Option<(ConvParams, BnParams)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv(ConvParams),
    BatchNorm(BnParams),
    Linear(LinearParams),
    Residual(Box<ResidualParams>),
    None,
}

/// Learnable state of a model, one entry per layer of its [`ModelSpec`].
///
/// The same structure doubles as the gradient container (running
/// statistics are then always zero).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    version: u64,
}

impl ModelParams {
    pub fn new(layers: Vec<LayerParams>) -> Self {
        ModelParams { layers, version: 0 }
    }

    /// Counter bumped on every mutable access to parameter arrays; forward
    /// caches remember it so backward can refuse a stale cache.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Every array in spec order.
    pub fn arrays(&self) -> Vec<(ParamKind, &Vec<f64>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Conv(c) => push_conv(&mut out, c),
                LayerParams::BatchNorm(b) => push_bn(&mut out, b),
                LayerParams::Linear(l) => {
                    out.push((ParamKind::Weight, &l.weight));
                    out.push((ParamKind::Bias, &l.bias));
                }
                LayerParams::Residual(r) => {
                    push_conv(&mut out, &r.conv1);
                    push_bn(&mut out, &r.bn1);
                    push_conv(&mut out, &r.conv2);
                    push_bn(&mut out, &r.bn2);
                    if let Some((c, b)) = &r.projection {
                        push_conv(&mut out, c);
                        push_bn(&mut out, b);
                    }
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(ParamKind, &mut Vec<f64>)> {
        self.version += 1;
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Conv(c) => push_conv_mut(&mut out, c),
                LayerParams::BatchNorm(b) => push_bn_mut(&mut out, b),
                LayerParams::Linear(l) => {
                    out.push((ParamKind::Weight, &mut l.weight));
                    out.push((ParamKind::Bias, &mut l.bias));
                }
                LayerParams::Residual(r) => {
                    let r = &mut **r;
                    push_conv_mut(&mut out, &mut r.conv1);
                    push_bn_mut(&mut out, &mut r.bn1);
                    push_conv_mut(&mut out, &mut r.conv2);
                    push_bn_mut(&mut out, &mut r.bn2);
                    if let Some((c, b)) = &mut r.projection {
                        push_conv_mut(&mut out, c);
                        push_bn_mut(&mut out, b);
                    }
                }
                LayerParams::None => {}
            }
        }
        out
    }

    /// Same structure with every value zero.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        z.version = 0;
        for (_, a) in z.arrays_mut() {
            a.fill(0.0);
        }
        z.version = 0;
        z
    }

    pub fn num_values(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn num_trainable(&self) -> usize {
        self.arrays()
            .iter()
            .filter(|(k, _)| k.trainable())
            .map(|(_, a)| a.len())
            .sum()
    }
}

fn push_conv<'a>(out: &mut Vec<(ParamKind, &'a Vec<f64>)>, c: &'a ConvParams) {
    out.push((ParamKind::Weight, &c.weight));
    if !c.bias.is_empty() {
        out.push((ParamKind::Bias, &c.bias));
    }
}

fn push_bn<'a>(out: &mut Vec<(ParamKind, &'a Vec<f64>)>, b: &'a BnParams) {
    out.push((ParamKind::BnScale, &b.gamma));
    out.push((ParamKind::BnShift, &b.beta));
    out.push((ParamKind::RunningMean, &b.running_mean));
    out.push((ParamKind::RunningVar, &b.running_var));
}

fn push_conv_mut<'a>(out: &mut Vec<(ParamKind, &'a mut Vec<f64>)>, c: &'a mut ConvParams) {
    out.push((ParamKind::Weight, &mut c.weight));
    if !c.bias.is_empty() {
        out.push((ParamKind::Bias, &mut c.bias));
    }
}

fn push_bn_mut<'a>(out: &mut Vec<(ParamKind, &'a mut Vec<f64>)>, b: &'a mut BnParams) {
    out.push((ParamKind::BnScale, &mut b.gamma));
    out.push((ParamKind::BnShift, &mut b.beta));
    out.push((ParamKind::RunningMean, &mut b.running_mean));
    out.push((ParamKind::RunningVar, &mut b.running_var));
}

fn residual_geometries(in_channels: usize, channels: usize, stride: usize) -> [ConvGeometry; 3] {
    [
        ConvGeometry {
            in_channels,
            out_channels: channels,
            kernel: 3,
            stride,
            pad: 1,
        },
        ConvGeometry {
            in_channels: channels,
            out_channels: channels,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        ConvGeometry {
            in_channels,
            out_channels: channels,
            kernel: 1,
            stride,
            pad: 0,
        },
    ]
}

fn needs_projection(in_channels: usize, channels: usize, stride: usize) -> bool {
    in_channels != channels || stride != 1
}

/// Conv and linear weights uniform in `±sqrt(6 / fan_in)`, biases zero,
/// batch norms at scale 1 / shift 0 with running mean 0 and variance 1.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    let shapes = spec.shapes()?;
    let mut rng = rng::rng_from(seed, &[0x1417]);
    let mut uniform = |len: usize, fan_in: usize| -> Vec<f64> {
        let bound = (6.0 / fan_in as f64).sqrt();
        (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
    };
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (layer, &(c, _, _)) in spec.layers.iter().zip(&shapes) {
        layers.push(match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                let g = ConvGeometry {
                    in_channels: c,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                };
                LayerParams::Conv(ConvParams {
                    weight: uniform(g.weight_len(), g.fan_in()),
                    bias: vec![0.0; out_channels],
                })
            }
            LayerSpec::BatchNorm { channels, .. } => LayerParams::BatchNorm(BnParams::new(channels)),
            LayerSpec::Linear { inputs, outputs } => LayerParams::Linear(LinearParams {
                weight: uniform(inputs * outputs, inputs),
                bias: vec![0.0; outputs],
            }),
            LayerSpec::Residual { channels, stride } => {
                let [g1, g2, gp] = residual_geometries(c, channels, stride);
                let conv1 = ConvParams {
                    weight: uniform(g1.weight_len(), g1.fan_in()),
                    bias: Vec::new(),
                };
                let conv2 = ConvParams {
                    weight: uniform(g2.weight_len(), g2.fan_in()),
                    bias: Vec::new(),
                };
                let projection = needs_projection(c, channels, stride).then(|| {
                    (
                        ConvParams {
                            weight: uniform(gp.weight_len(), gp.fan_in()),
                            bias: Vec::new(),
                        },
                        BnParams::new(channels),
                    )
                });
                LayerParams::Residual(Box::new(ResidualParams {
                    conv1,
                    bn1: BnParams::new(channels),
                    conv2,
                    bn2: BnParams::new(channels),
                    projection,
                }))
            }
            LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::GlobalAvgPool => LayerParams::None,
        });
    }
    Ok(ModelParams::new(layers))
}

#[derive(Debug, Clone)]
struct ResidualCache {
    input: Tensor4,
    bn1: BnCache,
    relu1: Tensor4,
    bn2: BnCache,
    projection: Option<BnCache>,
    output: Tensor4,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Conv { input: Tensor4 },
    BatchNorm(BnCache),
    Relu { output: Tensor4 },
    MaxPool { argmax: Vec<usize>, in_shape: [usize; 4] },
    Residual(Box<ResidualCache>),
    Gap { in_shape: [usize; 4] },
    Linear { input: Tensor4 },
}

/// Activations saved by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    batch: usize,
    version: u64,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// `batch × classes`, row-major.
    pub logits: Vec<f64>,
    pub cache: ForwardCache,
}

fn check_layer_params(i: usize, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Shape {
            layer: i,
            message: "parameters do not match the layer kind".into(),
        })
    }
}

fn bn_forward(x: &Tensor4, p: &mut BnParams, momentum: f64, epsilon: f64, mode: Mode) -> (Tensor4, BnCache) {
    layers::batchnorm_forward(
        x,
        &p.gamma,
        &p.beta,
        &mut p.running_mean,
        &mut p.running_var,
        momentum,
        epsilon,
        mode == Mode::Train,
    )
}

/// Run the model on `input`. Train mode normalises with batch statistics
/// and updates the running statistics in `params`; eval mode leaves
/// `params` untouched.
pub fn forward(params: &mut ModelParams, spec: &ModelSpec, input: &Tensor4, mode: Mode) -> Result<Forward> {
    forward_with(params, spec, input, mode, None)
}

/// Fold one training batch into a cumulative average of batch-norm
/// statistics. Call with `seen` = 0, 1, 2, … over a pass of batches; after
/// the pass every running mean and variance is the average of the batch
/// statistics under the current weights.
pub fn accumulate_batch_norm(params: &mut ModelParams, spec: &ModelSpec, input: &Tensor4, seen: usize) -> Result<()> {
    forward_with(params, spec, input, Mode::Train, Some(1.0 / (seen + 1) as f64)).map(|_| ())
}

fn forward_with(
    params: &mut ModelParams,
    spec: &ModelSpec,
    input: &Tensor4,
    mode: Mode,
    bn_momentum: Option<f64>,
) -> Result<Forward> {
    let [n, c, h, w] = input.shape();
    if (c, h, w) != spec.input_shape() || n == 0 {
        return Err(Error::Shape {
            layer: 0,
            message: format!(
                "input {:?} does not match expected (N, {}, {}, {})",
                input.shape(),
                spec.input_channels,
                spec.input_size,
                spec.input_size
            ),
        });
    }
    if params.layers.len() != spec.layers.len() {
        return Err(Error::Shape {
            layer: params.layers.len().min(spec.layers.len()),
            message: "parameter count does not match the model spec".into(),
        });
    }
    let shapes = spec.shapes()?;
    let mut x = input.clone();
    let mut caches = Vec::with_capacity(spec.layers.len());
    for (i, (layer, p)) in spec.layers.iter().zip(params.layers.iter_mut()).enumerate() {
        let in_channels = shapes[i].0;
        let (y, cache) = match (*layer, p) {
            (
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                },
                LayerParams::Conv(cp),
            ) => {
                let g = ConvGeometry {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                };
                check_layer_params(i, cp.weight.len() == g.weight_len())?;
                let y = layers::conv2d_forward(&x, &cp.weight, &cp.bias, &g);
                (y, LayerCache::Conv { input: x })
            }
            (LayerSpec::BatchNorm { channels, momentum, epsilon }, LayerParams::BatchNorm(bp)) => {
                check_layer_params(i, bp.gamma.len() == channels)?;
                let (y, cache) = bn_forward(&x, bp, bn_momentum.unwrap_or(momentum), epsilon, mode);
                (y, LayerCache::BatchNorm(cache))
            }
            (LayerSpec::Relu, LayerParams::None) => {
                let y = layers::relu_forward(&x);
                (y.clone(), LayerCache::Relu { output: y })
            }
            (LayerSpec::MaxPool { kernel, stride }, LayerParams::None) => {
                let (y, argmax) = layers::maxpool_forward(&x, kernel, stride);
                (
                    y,
                    LayerCache::MaxPool {
                        argmax,
                        in_shape: x.shape(),
                    },
                )
            }
            (LayerSpec::GlobalAvgPool, LayerParams::None) => (
                layers::gap_forward(&x),
                LayerCache::Gap { in_shape: x.shape() },
            ),
            (LayerSpec::Linear { inputs, outputs }, LayerParams::Linear(lp)) => {
                check_layer_params(i, lp.weight.len() == inputs * outputs && lp.bias.len() == outputs)?;
                let y = layers::linear_forward(&x, &lp.weight, &lp.bias, outputs);
                (y, LayerCache::Linear { input: x })
            }
            (LayerSpec::Residual { channels, stride }, LayerParams::Residual(rp)) => {
                let [g1, g2, gp] = residual_geometries(in_channels, channels, stride);
                check_layer_params(
                    i,
                    rp.conv1.weight.len() == g1.weight_len()
                        && rp.conv2.weight.len() == g2.weight_len()
                        && rp.projection.is_some() == needs_projection(in_channels, channels, stride),
                )?;
                let a = layers::conv2d_forward(&x, &rp.conv1.weight, &[], &g1);
                let (a, bn1) = bn_forward(&a, &mut rp.bn1, bn_momentum.unwrap_or(BN_MOMENTUM), BN_EPSILON, mode);
                let relu1 = layers::relu_forward(&a);
                let b = layers::conv2d_forward(&relu1, &rp.conv2.weight, &[], &g2);
                let (mut sum, bn2) = bn_forward(&b, &mut rp.bn2, bn_momentum.unwrap_or(BN_MOMENTUM), BN_EPSILON, mode);
                let projection = match &mut rp.projection {
                    Some((pc, pb)) => {
                        let s = layers::conv2d_forward(&x, &pc.weight, &[], &gp);
                        let (s, cache) = bn_forward(&s, pb, bn_momentum.unwrap_or(BN_MOMENTUM), BN_EPSILON, mode);
                        for (d, v) in sum.data_mut().iter_mut().zip(s.data()) {
                            *d += v;
                        }
                        Some(cache)
                    }
                    None => {
                        for (d, v) in sum.data_mut().iter_mut().zip(x.data()) {
                            *d += v;
                        }
                        None
                    }
                };
                let output = layers::relu_forward(&sum);
                (
                    output.clone(),
                    LayerCache::Residual(Box::new(ResidualCache {
                        input: x,
                        bn1,
                        relu1,
                        bn2,
                        projection,
                        output,
                    })),
                )
            }
            _ => {
                return Err(Error::Shape {
                    layer: i,
                    message: "parameters do not match the layer kind".into(),
                })
            }
        };
        caches.push(cache);
        x = y;
    }
    let logits = x.into_data();
    Ok(Forward {
        logits,
        cache: ForwardCache {
            layers: caches,
            batch: n,
            version: params.version(),
        },
    })
}

/// Exact gradients of the loss with respect to every parameter, given the
/// loss gradient `dlogits` at the model output. Also returns the gradient
/// with respect to the model input.
pub fn backward(
    params: &ModelParams,
    spec: &ModelSpec,
    cache: &ForwardCache,
    dlogits: &[f64],
) -> Result<(ModelParams, Tensor4)> {
    let (grads, dx) = backward_pass(params, spec, cache, dlogits, true)?;
    Ok((grads, dx.expect("input gradient requested")))
}

/// Parameter gradients only. Skips the input gradient of a leading
/// convolution, which training never needs.
pub fn param_gradients(
    params: &ModelParams,
    spec: &ModelSpec,
    cache: &ForwardCache,
    dlogits: &[f64],
) -> Result<ModelParams> {
    Ok(backward_pass(params, spec, cache, dlogits, false)?.0)
}

fn backward_pass(
    params: &ModelParams,
    spec: &ModelSpec,
    cache: &ForwardCache,
    dlogits: &[f64],
    input_grad: bool,
) -> Result<(ModelParams, Option<Tensor4>)> {
    if cache.version != params.version() {
        return Err(Error::StaleCache(format!(
            "cache taken at parameter version {}, parameters are at {}",
            cache.version,
            params.version()
        )));
    }
    if cache.layers.len() != spec.layers.len() || params.layers.len() != spec.layers.len() {
        return Err(Error::StaleCache("cache does not match the model spec".into()));
    }
    let classes = spec.num_classes();
    if dlogits.len() != cache.batch * classes {
        return Err(Error::StaleCache(format!(
            "gradient has {} values, cache holds a batch of {} × {classes}",
            dlogits.len(),
            cache.batch
        )));
    }
    let shapes = spec.shapes()?;
    let mut grads = params.zeros_like();
    let mut dy = Tensor4::from_vec([cache.batch, classes, 1, 1], dlogits.to_vec())?;

    for i in (0..spec.layers.len()).rev() {
        let in_channels = shapes[i].0;
        let stale = || Error::StaleCache(format!("cache entry {i} does not match layer kind"));
        dy = match (spec.layers[i], &params.layers[i], &cache.layers[i], &mut grads.layers[i]) {
            (
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                },
                LayerParams::Conv(p),
                LayerCache::Conv { input },
                LayerParams::Conv(g),
            ) => {
                let geom = ConvGeometry {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                };
                if i == 0 && !input_grad {
                    layers::conv2d_gradients(input, &dy, &p.weight, &geom, &mut g.weight, &mut g.bias, false);
                    return Ok((grads, None));
                }
                layers::conv2d_backward(input, &dy, &p.weight, &geom, &mut g.weight, &mut g.bias)
            }
            (LayerSpec::BatchNorm { .. }, LayerParams::BatchNorm(p), LayerCache::BatchNorm(c), LayerParams::BatchNorm(g)) => {
                layers::batchnorm_backward(&dy, c, &p.gamma, &mut g.gamma, &mut g.beta)
            }
            (LayerSpec::Relu, _, LayerCache::Relu { output }, _) => layers::relu_backward(output, &dy),
            (LayerSpec::MaxPool { .. }, _, LayerCache::MaxPool { argmax, in_shape }, _) => {
                layers::maxpool_backward(&dy, argmax, *in_shape)
            }
            (LayerSpec::GlobalAvgPool, _, LayerCache::Gap { in_shape }, _) => layers::gap_backward(&dy, *in_shape),
            (LayerSpec::Linear { outputs, .. }, LayerParams::Linear(p), LayerCache::Linear { input }, LayerParams::Linear(g)) => {
                layers::linear_backward(input, &dy, &p.weight, outputs, &mut g.weight, &mut g.bias)
            }
            (LayerSpec::Residual { channels, stride }, LayerParams::Residual(p), LayerCache::Residual(c), LayerParams::Residual(g)) => {
                let [g1, g2, gp] = residual_geometries(in_channels, channels, stride);
                let dsum = layers::relu_backward(&c.output, &dy);
                // branch
                let db = layers::batchnorm_backward(&dsum, &c.bn2, &p.bn2.gamma, &mut g.bn2.gamma, &mut g.bn2.beta);
                let drelu1 = layers::conv2d_backward(&c.relu1, &db, &p.conv2.weight, &g2, &mut g.conv2.weight, &mut []);
                let da = layers::relu_backward(&c.relu1, &drelu1);
                let da = layers::batchnorm_backward(&da, &c.bn1, &p.bn1.gamma, &mut g.bn1.gamma, &mut g.bn1.beta);
                let mut dx = layers::conv2d_backward(&c.input, &da, &p.conv1.weight, &g1, &mut g.conv1.weight, &mut []);
                // skip
                match (&p.projection, &c.projection, &mut g.projection) {
                    (Some((pc, pb)), Some(bn_cache), Some((gc, gb))) => {
                        let ds = layers::batchnorm_backward(&dsum, bn_cache, &pb.gamma, &mut gb.gamma, &mut gb.beta);
                        let dskip = layers::conv2d_backward(&c.input, &ds, &pc.weight, &gp, &mut gc.weight, &mut []);
                        for (d, v) in dx.data_mut().iter_mut().zip(dskip.data()) {
                            *d += v;
                        }
                    }
                    (None, None, None) => {
                        for (d, v) in dx.data_mut().iter_mut().zip(dsum.data()) {
                            *d += v;
                        }
                    }
                    _ => return Err(stale()),
                }
                dx
            }
            _ => return Err(stale()),
        };
    }
    Ok((grads, Some(dy)))
}
