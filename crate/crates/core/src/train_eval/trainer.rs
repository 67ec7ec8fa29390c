use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ConfusionCounts, Metrics};
use crate::dsp::normalize_unit;
use crate::labels::{FoldPlan, LabeledExample};
use crate::nn::{self, Mode, ModelParams, ModelSpec, MomentumBuffers, Tensor4, TrainConfig};
use crate::rng;
use crate::signal_io::SegmentKey;
use crate::{Error, Result};

/// Min-max normalise a spectrogram grid and area-resample it to
/// `size × size`. The result is a single channel; batches replicate it
/// across the model's input channels.
pub fn prepare_input(grid: &[f32], height: usize, width: usize, size: usize) -> Vec<f64> {
    assert_eq!(grid.len(), height * width, "grid shape");
    let values: Vec<f64> = grid.iter().map(|&v| v as f64).collect();
    let unit = normalize_unit(&values);
    if size == height && size == width {
        return unit;
    }
    let bounds = |i: usize, n: usize| {
        let lo = i * n / size;
        let hi = ((i + 1) * n / size).max(lo + 1);
        (lo, hi)
    };
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let (r0, r1) = bounds(r, height);
        for c in 0..size {
            let (c0, c1) = bounds(c, width);
            let mut sum = 0.0;
            for row in r0..r1 {
                sum += unit[row * width + c0..row * width + c1].iter().sum::<f64>();
            }
            out.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    out
}

fn batch_tensor(images: &[Vec<f64>], indices: &[usize], spec: &ModelSpec) -> Result<Tensor4> {
    let plane = spec.input_size * spec.input_size;
    let channels = spec.input_channels;
    let mut data = Vec::with_capacity(indices.len() * channels * plane);
    for &i in indices {
        let image = &images[i];
        if image.len() != plane {
            return Err(Error::Shape {
                layer: 0,
                message: format!("image has {} values, model expects {plane}", image.len()),
            });
        }
        for _ in 0..channels {
            data.extend_from_slice(image);
        }
    }
    Tensor4::from_vec([indices.len(), channels, spec.input_size, spec.input_size], data)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainedModel {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Train from a fresh initialisation on `train` (indices into `images` /
/// `labels`). Each epoch shuffles with a stream derived from `seed`; the
/// last batch may be partial.
pub fn train_model(
    images: &[Vec<f64>],
    labels: &[u8],
    train: &[usize],
    spec: &ModelSpec,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    config.validate()?;
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let mut params = nn::init_params(spec, rng::derive_seed(seed, &[0x1417]))?;
    let mut buffers = MomentumBuffers::zeros_like(&params);
    let mut order = train.to_vec();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = rng::rng_from(seed, &[0xe90c, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let input = batch_tensor(images, batch, spec)?;
            let batch_labels: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
            let fwd = nn::forward(&mut params, spec, &input, Mode::Train)?;
            let (loss, dlogits) = nn::softmax_cross_entropy(&fwd.logits, &batch_labels)?;
            let grads = nn::param_gradients(&params, spec, &fwd.cache, &dlogits)?;
            nn::sgd_step(&mut params, &grads, &mut buffers, config);
            total += loss * batch.len() as f64;
        }
        epoch_losses.push(total / order.len() as f64);
    }
    // The running averages lag far behind weights that moved this much in a
    // few hundred steps; re-estimate them under the final weights.
    order.shuffle(&mut rng::rng_from(seed, &[0xb17a]));
    for (seen, batch) in order.chunks(config.batch_size).enumerate() {
        let input = batch_tensor(images, batch, spec)?;
        nn::accumulate_batch_norm(&mut params, spec, &input, seen)?;
    }
    Ok(TrainedModel {
        params,
        epoch_losses,
    })
}

/// Eval-mode logits for `indices`, batched.
pub fn predict_logits(
    params: &ModelParams,
    spec: &ModelSpec,
    images: &[Vec<f64>],
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<[f64; 2]>> {
    let mut params = params.clone();
    let mut out = Vec::with_capacity(indices.len());
    for batch in indices.chunks(batch_size.max(1)) {
        let input = batch_tensor(images, batch, spec)?;
        let fwd = nn::forward(&mut params, spec, &input, Mode::Eval)?;
        out.extend(fwd.logits.chunks_exact(2).map(|l| [l[0], l[1]]));
    }
    Ok(out)
}

/// Class with the larger logit; ties go to class 0.
pub fn predicted_class(logits: &[f64; 2]) -> u8 {
    u8::from(logits[1] > logits[0])
}

/// Fraction of `indices` classified correctly in eval mode.
pub fn accuracy(
    params: &ModelParams,
    spec: &ModelSpec,
    images: &[Vec<f64>],
    labels: &[u8],
    indices: &[usize],
) -> Result<f64> {
    let logits = predict_logits(params, spec, images, indices, 64)?;
    let correct = logits
        .iter()
        .zip(indices)
        .filter(|(l, &i)| predicted_class(l) == labels[i])
        .count();
    Ok(correct as f64 / indices.len().max(1) as f64)
}

/// One evaluated example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub key: SegmentKey,
    pub label: u8,
    pub prediction: u8,
    pub logits: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub params: ModelParams,
    pub epoch_losses: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
}

impl FoldOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Evaluate `params` on the test examples of `fold`.
pub fn evaluate_fold(
    params: &ModelParams,
    images: &[Vec<f64>],
    examples: &[LabeledExample],
    fold: usize,
    plan: &FoldPlan,
    spec: &ModelSpec,
    batch_size: usize,
) -> Result<(ConfusionCounts, Vec<Prediction>)> {
    let test = plan.test_indices(fold);
    if test.is_empty() {
        return Err(Error::InsufficientData(format!("fold {fold} has no test examples")));
    }
    let image_idx: Vec<usize> = test.iter().map(|&i| examples[i].spectrogram).collect();
    let logits = predict_logits(params, spec, images, &image_idx, batch_size)?;
    let predictions: Vec<Prediction> = test
        .iter()
        .zip(logits)
        .map(|(&i, logits)| Prediction {
            key: examples[i].key,
            label: examples[i].label.bit(),
            prediction: predicted_class(&logits),
            logits,
        })
        .collect();
    let counts = ConfusionCounts::from_pairs(predictions.iter().map(|p| (p.label, p.prediction)));
    Ok((counts, predictions))
}

/// Train on every example outside `fold` and evaluate on the fold.
///
/// `images` is indexed by [`LabeledExample::spectrogram`]. Initialisation and
/// shuffling are seeded from `config.seed` and the fold index.
pub fn train_fold(
    images: &[Vec<f64>],
    examples: &[LabeledExample],
    fold: usize,
    plan: &FoldPlan,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<FoldOutcome> {
    if fold >= plan.k {
        return Err(Error::InvalidArgument(format!("fold {fold} outside 0..{}", plan.k)));
    }
    if plan.assignments.len() != examples.len() {
        return Err(Error::InvalidArgument("fold plan does not match the example set".into()));
    }
    let train = plan.train_indices(fold);
    let test_size = plan.assignments.len() - train.len();
    if train.is_empty() || test_size == 0 {
        return Err(Error::InsufficientData(format!(
            "fold {fold}: {} training and {test_size} test examples",
            train.len()
        )));
    }
    let labels: Vec<u8> = {
        let mut l = vec![0u8; images.len()];
        for e in examples {
            l[e.spectrogram] = e.label.bit();
        }
        l
    };
    let train_images: Vec<usize> = train.iter().map(|&i| examples[i].spectrogram).collect();
    let seed = rng::derive_seed(config.seed, &[0xf07d, fold as u64]);
    let model = train_model(images, &labels, &train_images, spec, config, seed)?;
    let (counts, predictions) =
        evaluate_fold(&model.params, images, examples, fold, plan, spec, config.batch_size)?;
    Ok(FoldOutcome {
        fold,
        metrics: compute_metrics(&counts),
        params: model.params,
        epoch_losses: model.epoch_losses,
        train_size: train.len(),
        test_size,
        counts,
        predictions,
    })
}
