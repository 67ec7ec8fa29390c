//! ECG-to-personality pipeline.
//!
//! Raw ECG recordings are cut into fixed-length segments, turned into
//! 224×224 log-power spectrograms with a Blackman-windowed STFT, labelled
//! with binary Big-Five classes and used to train a small residual CNN
//! under k-fold cross-validation.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`signal_io`]: ECG data model, dataset loading/writing, synthetic ECG, segmentation
//! - [`dsp`]: window, STFT, log spectrogram and the PGM / `SPEC` export formats
//! - [`labels`]: score thresholds, clip categories, example assembly, stratified folds
//! - [`nn`]: tensors, layers, exact backpropagation and SGD
//! - [`train_eval`]: fold training, metrics, experiment driver and reports
//! - [`store`]: on-disk spectrogram store shared by the pipeline stages

pub mod dsp;
pub mod error;
pub mod labels;
pub mod nn;
pub mod rng;
pub mod signal_io;
pub mod store;
pub mod train_eval;

pub use dsp::{Spectrogram, SpectrogramConfig, WindowPreset};
pub use error::{Error, ErrorKind, Result};
pub use labels::{BigFiveScores, ClipCategory, Dimension, FoldPlan, Granularity, LabeledExample};
pub use nn::{ModelParams, ModelSpec, Tensor4, TrainConfig};
pub use signal_io::{Channel, EcgRecord, Segment, SegmentKey};
pub use store::{ExportFormat, SpectrogramStore, StoreMeta};
pub use train_eval::{ConfusionCounts, ExperimentConfig, Metrics, MetricsReport, RunConfig};
