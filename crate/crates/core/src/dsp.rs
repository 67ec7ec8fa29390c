//! Blackman-windowed STFT, log-power spectrograms and their export formats.
//!
//! A spectrogram frame `m` starts at sample `m·hop`. Its `window_len`
//! samples are multiplied by a symmetric Blackman window, zero padded to
//! `dft_points` and transformed; the one-sided power `|X_m[k]|²` for
//! `k = 0..=dft_points/2` becomes a column of the spectrogram after
//! `v ↦ ln(v + ε)`.
//!
//! With 447 DFT points the one-sided spectrum has exactly 224 bins, and the
//! hop is chosen by [`solve_hop`] so that a 10 s segment yields at least 224
//! frames.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::signal_io::{Segment, SegmentKey};
use crate::{Error, Result};

pub const DFT_POINTS: usize = 447;
pub const TARGET_SIZE: usize = 224;
pub const LOG_FLOOR_EPSILON: f64 = 1e-12;

/// Symmetric Blackman window of `length` points.
pub fn blackman_window(length: usize) -> Result<Vec<f64>> {
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "Blackman window needs at least 2 points, got {length}"
        )));
    }
    let denom = (length - 1) as f64;
    Ok((0..length)
        .map(|n| {
            let x = n as f64 / denom;
            0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos()
        })
        .collect())
}

/// Number of one-sided bins of an `n`-point real DFT.
pub fn one_sided_bins(dft_points: usize) -> usize {
    dft_points / 2 + 1
}

/// Frames produced by sliding `window_len` over `len` samples with `hop`.
pub fn frame_count(len: usize, window_len: usize, hop: usize) -> usize {
    if len < window_len || hop == 0 {
        0
    } else {
        (len - window_len) / hop + 1
    }
}

/// Largest hop that still yields at least `target_width` frames over a
/// segment of `seg_len` samples.
pub fn solve_hop(seg_len: usize, window_len: usize, target_width: usize) -> Result<usize> {
    if target_width < 2 {
        return Err(Error::InvalidArgument(format!(
            "target width must be at least 2, got {target_width}"
        )));
    }
    if seg_len <= window_len {
        return Err(Error::InvalidArgument(format!(
            "segment of {seg_len} samples is not longer than the {window_len}-sample window"
        )));
    }
    let hop = (seg_len - window_len) / (target_width - 1);
    if hop < 1 {
        return Err(Error::InvalidArgument(format!(
            "segment of {seg_len} samples is too short for {target_width} frames of {window_len}"
        )));
    }
    Ok(hop)
}

/// The two window settings used throughout: `a` = 100 samples, `b` = 327.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowPreset {
    A,
    B,
}

impl WindowPreset {
    pub const ALL: [WindowPreset; 2] = [WindowPreset::A, WindowPreset::B];

    pub fn window_len(self) -> usize {
        match self {
            WindowPreset::A => 100,
            WindowPreset::B => 327,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            WindowPreset::A => "a",
            WindowPreset::B => "b",
        }
    }

    pub fn config(self, seg_len: usize) -> Result<SpectrogramConfig> {
        SpectrogramConfig::for_window(self.window_len(), seg_len)
    }
}

impl fmt::Display for WindowPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for WindowPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "100" => Ok(WindowPreset::A),
            "b" | "327" => Ok(WindowPreset::B),
            _ => Err(Error::InvalidArgument(format!("unknown window config {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub window_len: usize,
    pub hop: usize,
    pub dft_points: usize,
    pub target_height: usize,
    pub target_width: usize,
    pub log_floor_epsilon: f64,
}

impl SpectrogramConfig {
    /// 447-point, 224×224 configuration with the hop solved for `seg_len`.
    pub fn for_window(window_len: usize, seg_len: usize) -> Result<Self> {
        let config = SpectrogramConfig {
            window_len,
            hop: solve_hop(seg_len, window_len, TARGET_SIZE)?,
            dft_points: DFT_POINTS,
            target_height: TARGET_SIZE,
            target_width: TARGET_SIZE,
            log_floor_epsilon: LOG_FLOOR_EPSILON,
        };
        config.validate(seg_len)?;
        Ok(config)
    }

    pub fn overlap(&self) -> usize {
        self.window_len.saturating_sub(self.hop)
    }

    pub fn validate(&self, seg_len: usize) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.window_len < 2 || self.window_len > self.dft_points {
            return fail(format!(
                "window length {} must be in 2..={}",
                self.window_len, self.dft_points
            ));
        }
        if one_sided_bins(self.dft_points) != self.target_height {
            return fail(format!(
                "{} DFT points give {} bins, not the target height {}",
                self.dft_points,
                one_sided_bins(self.dft_points),
                self.target_height
            ));
        }
        if self.hop < 1 {
            return fail("hop must be at least 1".into());
        }
        let frames = frame_count(seg_len, self.window_len, self.hop);
        if frames < self.target_width {
            return fail(format!(
                "{frames} frames from {seg_len} samples is fewer than the target width {}",
                self.target_width
            ));
        }
        if !(self.log_floor_epsilon > 0.0) {
            return fail("log floor epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Where the complex exponential of each frame is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseReference {
    /// `e^{-jωn}` with `n` counted from the frame start.
    WindowLocal,
    /// `e^{-jω(n + m·hop)}` with `n + m·hop` the absolute sample index.
    Absolute,
}

/// Direct DFT over a precomputed twiddle table. Only the one-sided bins are
/// evaluated and only over the non-zero (unpadded) prefix of the input.
#[derive(Debug, Clone)]
pub struct Dft {
    points: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Dft {
    pub fn new(points: usize) -> Self {
        let (cos, sin) = (0..points)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / points as f64;
                (theta.cos(), theta.sin())
            })
            .unzip();
        Dft { points, cos, sin }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// `e^{-j2πj/N}` for `j` taken modulo `N`.
    pub fn twiddle(&self, j: usize) -> Complex64 {
        let j = j % self.points;
        Complex64::new(self.cos[j], -self.sin[j])
    }

    /// One-sided DFT of `x` zero padded to `points`.
    pub fn one_sided(&self, x: &[f64]) -> Vec<Complex64> {
        assert!(x.len() <= self.points, "input longer than the DFT size");
        let n_points = self.points;
        (0..one_sided_bins(n_points))
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                let mut idx = 0usize;
                for &v in x {
                    re += v * self.cos[idx];
                    im -= v * self.sin[idx];
                    idx += k;
                    if idx >= n_points {
                        idx -= n_points;
                    }
                }
                Complex64::new(re, im)
            })
            .collect()
    }
}

/// Frame-major grid of one-sided power values.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFrames {
    pub frames: usize,
    pub bins: usize,
    /// `data[m * bins + k]`
    pub data: Vec<f64>,
}

impl PowerFrames {
    pub fn frame(&self, m: usize) -> &[f64] {
        &self.data[m * self.bins..(m + 1) * self.bins]
    }
}

/// Complex one-sided STFT, one vector per frame.
pub fn stft_frames(
    samples: &[f64],
    config: &SpectrogramConfig,
    phase: PhaseReference,
) -> Result<Vec<Vec<Complex64>>> {
    if samples.len() < config.window_len {
        return Err(Error::InvalidArgument(format!(
            "{} samples is shorter than the {}-sample window",
            samples.len(),
            config.window_len
        )));
    }
    if config.hop == 0 || config.window_len > config.dft_points {
        return Err(Error::InvalidArgument("invalid STFT configuration".into()));
    }
    let window = blackman_window(config.window_len)?;
    let dft = Dft::new(config.dft_points);
    let frames = frame_count(samples.len(), config.window_len, config.hop);
    let mut windowed = vec![0.0; config.window_len];
    Ok((0..frames)
        .map(|m| {
            let start = m * config.hop;
            for ((dst, &x), &w) in windowed
                .iter_mut()
                .zip(&samples[start..start + config.window_len])
                .zip(&window)
            {
                *dst = x * w;
            }
            let mut spectrum = dft.one_sided(&windowed);
            if phase == PhaseReference::Absolute {
                for (k, bin) in spectrum.iter_mut().enumerate() {
                    *bin *= dft.twiddle((k * start) % config.dft_points);
                }
            }
            spectrum
        })
        .collect())
}

pub fn stft_power_frames(samples: &[f64], config: &SpectrogramConfig) -> Result<PowerFrames> {
    let frames = stft_frames(samples, config, PhaseReference::WindowLocal)?;
    let bins = one_sided_bins(config.dft_points);
    let data = frames
        .iter()
        .flat_map(|f| f.iter().map(|c| c.norm_sqr()))
        .collect();
    Ok(PowerFrames {
        frames: frames.len(),
        bins,
        data,
    })
}

/// Log-power spectrogram, frequency-bin rows by time-frame columns.
/// Row 0 is the DC bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub height: usize,
    pub width: usize,
    /// `values[row * width + col]`
    pub values: Vec<f64>,
    pub config: SpectrogramConfig,
    pub source: Option<SegmentKey>,
}

impl Spectrogram {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

pub fn log_spectrogram(segment: &Segment, config: &SpectrogramConfig) -> Result<Spectrogram> {
    let mut spec = log_spectrogram_from_samples(&segment.samples, config)?;
    spec.source = Some(segment.key());
    Ok(spec)
}

pub fn log_spectrogram_from_samples(
    samples: &[f64],
    config: &SpectrogramConfig,
) -> Result<Spectrogram> {
    let power = stft_power_frames(samples, config)?;
    if power.frames < config.target_width {
        return Err(Error::InvalidArgument(format!(
            "{} frames is fewer than the target width {}",
            power.frames, config.target_width
        )));
    }
    if power.bins != config.target_height {
        return Err(Error::InvalidArgument(format!(
            "{} bins does not match the target height {}",
            power.bins, config.target_height
        )));
    }
    let (height, width) = (config.target_height, config.target_width);
    let mut values = vec![0.0; height * width];
    for col in 0..width {
        let frame = power.frame(col);
        for (row, &p) in frame.iter().enumerate() {
            values[row * width + col] = (p + config.log_floor_epsilon).ln();
        }
    }
    Ok(Spectrogram {
        height,
        width,
        values,
        config: *config,
        source: None,
    })
}

/// Min-max scale to `[0, 1]`; a constant grid maps to all zeros.
pub fn normalize_unit(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / range).collect()
}

/// Binary PGM (`P5`, maxval 255) with the highest-frequency bin on the top
/// row. Pixels are `round(normalize_unit(v) · 255)`, halves away from zero.
pub fn encode_pgm(spec: &Spectrogram) -> Vec<u8> {
    let unit = normalize_unit(&spec.values);
    let mut out = format!("P5\n{} {}\n255\n", spec.width, spec.height).into_bytes();
    out.reserve(unit.len());
    for row in (0..spec.height).rev() {
        out.extend(
            unit[row * spec.width..(row + 1) * spec.width]
                .iter()
                .map(|&u| (u * 255.0).round() as u8),
        );
    }
    out
}

/// Decoded PGM: `(width, height, pixels)`, pixels row-major from the top.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("bad PGM magic {:?}", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let pixels = bytes.get(pos + 1..).unwrap_or(&[]);
    if pixels.len() != width * height {
        return Err(Error::Format(format!(
            "PGM raster has {} bytes, expected {}",
            pixels.len(),
            width * height
        )));
    }
    Ok((width, height, pixels.to_vec()))
}

pub fn export_pgm(spec: &Spectrogram, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(spec)).map_err(|e| Error::io(path, e))
}

pub const SPEC_MAGIC: &[u8; 4] = b"SPEC";

/// `SPEC` container: magic, height and width as u32 LE, then f32 LE values
/// row-major (un-normalised log power).
pub fn encode_f32(spec: &Spectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * spec.values.len());
    out.extend_from_slice(SPEC_MAGIC);
    out.extend_from_slice(&(spec.height as u32).to_le_bytes());
    out.extend_from_slice(&(spec.width as u32).to_le_bytes());
    for &v in &spec.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// A grid read back from a `SPEC` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

pub fn decode_f32(bytes: &[u8]) -> Result<SpecGrid> {
    if bytes.len() < 12 {
        return Err(Error::Format(format!("SPEC file of {} bytes is truncated", bytes.len())));
    }
    if &bytes[..4] != SPEC_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"SPEC\"",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != 4 * height * width {
        return Err(Error::Format(format!(
            "SPEC body has {} bytes, expected {} for {height}x{width}",
            body.len(),
            4 * height * width
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SpecGrid {
        height,
        width,
        values,
    })
}

pub fn export_f32(spec: &Spectrogram, path: &Path) -> Result<()> {
    fs::write(path, encode_f32(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_f32(path: &Path) -> Result<SpecGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_f32(&bytes).map_err(|e| e.context(path.display().to_string()))
}
