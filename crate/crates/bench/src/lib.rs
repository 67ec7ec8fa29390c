//! Deterministic inputs shared by the benchmarks in `benches/`.

use cardiotype::signal_io;
use cardiotype::Tensor4;

/// One 10 s segment of synthetic ECG at 256 Hz.
pub fn ecg_segment(heart_rate_bpm: f64, seed: u64) -> Vec<f64> {
    signal_io::synth_ecg(10.0, 256, heart_rate_bpm, 0.002, seed).expect("valid synth parameters")
}

/// A batch filled with a smooth, sign-changing pattern so ReLUs see both
/// halves of their domain.
pub fn pattern(shape: [usize; 4]) -> Tensor4 {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|i| ((i as f64) * 0.37).sin() * 0.8).collect();
    Tensor4::from_vec(shape, data).expect("shape matches length")
}

/// Weights in [-0.5, 0.5) for a layer with `len` parameters.
pub fn weights(len: usize) -> Vec<f64> {
    (0..len).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect()
}
