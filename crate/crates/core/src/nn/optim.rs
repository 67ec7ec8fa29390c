use super::model::ModelParams;
use super::TrainConfig;

/// Velocity buffers for SGD with momentum, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumBuffers(pub ModelParams);

impl MomentumBuffers {
    pub fn zeros_like(params: &ModelParams) -> Self {
        MomentumBuffers(params.zeros_like())
    }
}

/// One SGD step over every trainable array:
///
/// ```text
/// g' = g + weight_decay · w
/// v  = momentum · v + g'
/// w  = w − lr · v
/// ```
///
/// Batch-norm running statistics are neither decayed nor updated.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelParams, buffers: &mut MomentumBuffers, config: &TrainConfig) {
    let (lr, mu, wd) = (config.learning_rate, config.momentum, config.weight_decay);
    let grads = grads.arrays();
    let velocity = buffers.0.arrays_mut();
    let weights = params.arrays_mut();
    assert_eq!(weights.len(), grads.len(), "gradient structure");
    assert_eq!(weights.len(), velocity.len(), "momentum structure");
    for (((kind, w), (_, g)), (_, v)) in weights.into_iter().zip(grads).zip(velocity) {
        if !kind.trainable() {
            continue;
        }
        for ((wi, &gi), vi) in w.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            let g = gi + wd * *wi;
            *vi = mu * *vi + g;
            *wi -= lr * *vi;
        }
    }
}
