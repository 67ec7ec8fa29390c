//! From-scratch CNN core: tensors, layers with exact backpropagation,
//! softmax cross-entropy and SGD with momentum and weight decay.
//!
//! Everything runs in `f64` so finite-difference checks are meaningful.

mod checkpoint;
mod direct;
mod layers;
mod loss;
mod model;
mod optim;
mod spec;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, conv_out_size, gap_backward,
    gap_forward, linear_backward, linear_forward, maxpool_backward, maxpool_forward, relu_backward,
    relu_forward, BnCache, ConvGeometry,
};
pub use loss::{softmax, softmax_cross_entropy};
pub use model::{
    accumulate_batch_norm, backward, forward, init_params, param_gradients, BnParams, ConvParams, Forward,
    ForwardCache, LayerParams, LinearParams, Mode, ModelParams, ParamKind, ResidualParams,
};
pub use optim::{sgd_step, MomentumBuffers};
pub use spec::{LayerSpec, ModelSpec, Shape, BN_EPSILON, BN_MOMENTUM};
pub use tensor::Tensor4;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Side length the 224×224 spectrograms are resampled to.
    pub input_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.001,
            seed: 0,
            input_size: 224,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.epochs >= 1
            && self.batch_size >= 1
            && self.input_size >= 1
            && self.learning_rate > 0.0
            && self.momentum >= 0.0
            && self.weight_decay >= 0.0
            && self.learning_rate.is_finite()
            && self.momentum.is_finite()
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }
}
