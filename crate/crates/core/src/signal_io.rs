//! ECG data model, dataset layout and segmentation.
//!
//! A dataset root has the following layout:
//!
//! ```text
//! root/manifest.json              {"sample_rate_hz": 256, "subjects": 58, "clips": 36, "channels": ["left_arm","right_arm"]}
//! root/scores.csv                 subject_id,extraversion,agreeableness,conscientiousness,emotional_stability,openness
//! root/signals/S{ss}_C{cc}.csv    left_arm,right_arm  (one row per sample, millivolts)
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::labels::{BigFiveScores, Dimension};
use crate::rng;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const SIGNALS_DIR: &str = "signals";
pub const SIGNAL_HEADER: &str = "left_arm,right_arm";
pub const SCORES_HEADER: &str =
    "subject_id,extraversion,agreeableness,conscientiousness,emotional_stability,openness";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[default]
    LeftArm,
    RightArm,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::LeftArm => "left_arm",
            Channel::RightArm => "right_arm",
        }
    }

    fn column(self) -> usize {
        match self {
            Channel::LeftArm => 0,
            Channel::RightArm => 1,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left_arm" | "left" => Ok(Channel::LeftArm),
            "right_arm" | "right" => Ok(Channel::RightArm),
            other => Err(Error::InvalidArgument(format!("unknown channel {other:?}"))),
        }
    }
}

/// One subject/clip recording of a single ECG channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub subject_id: u32,
    pub clip_id: u32,
    pub channel: Channel,
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

impl EcgRecord {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Provenance of a segment, also used to name spectrogram files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentKey {
    pub subject_id: u32,
    pub clip_id: u32,
    pub offset: usize,
}

impl SegmentKey {
    /// File stem `S{ss}_C{cc}_O{offset}`.
    pub fn file_stem(&self) -> String {
        format!("S{:02}_C{:02}_O{}", self.subject_id, self.clip_id, self.offset)
    }

    pub fn parse_file_stem(stem: &str) -> Option<Self> {
        let rest = stem.strip_prefix('S')?;
        let (subject, rest) = rest.split_once("_C")?;
        let (clip, offset) = rest.split_once("_O")?;
        Some(SegmentKey {
            subject_id: parse_digits(subject)?,
            clip_id: parse_digits(clip)?,
            offset: parse_digits(offset)? as usize,
        })
    }
}

fn parse_digits(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub subject_id: u32,
    pub clip_id: u32,
    pub channel: Channel,
    pub offset_samples: usize,
    pub samples: Vec<f64>,
}

impl Segment {
    pub fn key(&self) -> SegmentKey {
        SegmentKey {
            subject_id: self.subject_id,
            clip_id: self.clip_id,
            offset: self.offset_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub sample_rate_hz: u32,
    pub subjects: u32,
    pub clips: u32,
    pub channels: Vec<Channel>,
}

impl Manifest {
    pub fn new(sample_rate_hz: u32, subjects: u32, clips: u32) -> Self {
        Manifest {
            sample_rate_hz,
            subjects,
            clips,
            channels: vec![Channel::LeftArm, Channel::RightArm],
        }
    }

    /// Canonical JSON text, byte for byte the documented layout.
    pub fn to_json(&self) -> String {
        let channels: Vec<String> = self
            .channels
            .iter()
            .map(|c| format!("\"{}\"", c.as_str()))
            .collect();
        format!(
            "{{\"sample_rate_hz\": {}, \"subjects\": {}, \"clips\": {}, \"channels\": [{}]}}\n",
            self.sample_rate_hz,
            self.subjects,
            self.clips,
            channels.join(",")
        )
    }

    fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::Config("manifest sample_rate_hz must be positive".into()));
        }
        if self.subjects == 0 || self.clips == 0 {
            return Err(Error::Config("manifest subject and clip counts must be positive".into()));
        }
        Ok(())
    }
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::ManifestNotFound(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Options for [`load_dataset_with`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub channel: Channel,
    /// When set, the manifest rate must match exactly.
    pub expected_sample_rate_hz: Option<u32>,
}

/// Load every signal file under `root` for one channel, ordered by
/// `(subject_id, clip_id)`.
pub fn load_dataset(root: &Path, channel: Channel) -> Result<Vec<EcgRecord>> {
    load_dataset_with(
        root,
        &LoadOptions {
            channel,
            expected_sample_rate_hz: None,
        },
    )
}

pub fn load_dataset_with(root: &Path, options: &LoadOptions) -> Result<Vec<EcgRecord>> {
    let manifest = read_manifest(root)?;
    if let Some(expected) = options.expected_sample_rate_hz {
        if expected != manifest.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                manifest: manifest.sample_rate_hz,
                expected,
            });
        }
    }
    if !manifest.channels.contains(&options.channel) {
        return Err(Error::Config(format!(
            "channel {} is not listed in the manifest",
            options.channel
        )));
    }

    let files = signal_files(root, &manifest)?;
    files
        .par_iter()
        .map(|(subject_id, clip_id, path)| {
            let samples = read_signal_file(path, options.channel)?;
            Ok(EcgRecord {
                subject_id: *subject_id,
                clip_id: *clip_id,
                channel: options.channel,
                sample_rate_hz: manifest.sample_rate_hz,
                samples,
            })
        })
        .collect()
}

/// Signal files sorted by `(subject, clip)`; names outside the
/// `S{ss}_C{cc}.csv` pattern are ignored.
fn signal_files(root: &Path, manifest: &Manifest) -> Result<Vec<(u32, u32, PathBuf)>> {
    let dir = root.join(SIGNALS_DIR);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some((subject_id, clip_id)) = parse_signal_name(name) else {
            continue;
        };
        if !(1..=manifest.subjects).contains(&subject_id) || !(1..=manifest.clips).contains(&clip_id) {
            return Err(Error::Config(format!(
                "{name}: subject/clip outside manifest ranges 1..={} / 1..={}",
                manifest.subjects, manifest.clips
            )));
        }
        files.push((subject_id, clip_id, entry.path()));
    }
    files.sort();
    Ok(files)
}

fn parse_signal_name(name: &str) -> Option<(u32, u32)> {
    let stem = name.strip_suffix(".csv")?;
    let (subject, clip) = stem.strip_prefix('S')?.split_once("_C")?;
    Some((parse_digits(subject)?, parse_digits(clip)?))
}

pub fn signal_file_name(subject_id: u32, clip_id: u32) -> String {
    format!("S{subject_id:02}_C{clip_id:02}.csv")
}

fn read_signal_file(path: &Path, channel: Channel) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty signal file"))?
        .trim_end_matches('\r');
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let column = columns
        .iter()
        .position(|c| *c == channel.as_str())
        .ok_or_else(|| Error::parse(path, 1, format!("missing channel column {channel}")))?;
    if columns.len() != 2 || columns[channel.column()] != channel.as_str() {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {SIGNAL_HEADER:?}, found {header:?}"),
        ));
    }

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} cells, found {}", columns.len(), cells.len()),
            ));
        }
        for cell in &cells {
            cell.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line_no, format!("non-numeric cell {cell:?}")))?;
        }
        samples.push(cells[column].trim().parse::<f64>().expect("validated above"));
    }
    if samples.is_empty() {
        return Err(Error::parse(path, 1, "signal file has no samples"));
    }
    Ok(samples)
}

pub fn read_scores(root: &Path) -> Result<Vec<BigFiveScores>> {
    let path = root.join(SCORES_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != SCORES_HEADER {
        return Err(Error::parse(&path, 1, format!("expected header {SCORES_HEADER:?}")));
    }
    let mut scores = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 6 {
            return Err(Error::parse(&path, line_no, format!("expected 6 cells, found {}", cells.len())));
        }
        let subject_id = cells[0]
            .parse::<u32>()
            .map_err(|_| Error::parse(&path, line_no, format!("bad subject_id {:?}", cells[0])))?;
        let mut values = [0.0; 5];
        for (v, cell) in values.iter_mut().zip(&cells[1..]) {
            *v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(&path, line_no, format!("non-numeric score {cell:?}")))?;
        }
        scores.push(BigFiveScores::new(subject_id, values));
    }
    scores.sort_by_key(|s| s.subject_id);
    if let Some(w) = scores.windows(2).find(|w| w[0].subject_id == w[1].subject_id) {
        return Err(Error::Config(format!("duplicate scores row for subject {}", w[0].subject_id)));
    }
    Ok(scores)
}

/// Both channels of one clip, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSignals {
    pub subject_id: u32,
    pub clip_id: u32,
    pub left_arm: Vec<f64>,
    pub right_arm: Vec<f64>,
}

/// Write a complete dataset layout under `root`.
///
/// Samples are written with Rust's shortest round-trip float formatting, so
/// loading the result yields bit-identical values.
pub fn write_dataset(
    root: &Path,
    manifest: &Manifest,
    scores: &[BigFiveScores],
    clips: &[ClipSignals],
) -> Result<()> {
    use std::fmt::Write as _;

    let signals = root.join(SIGNALS_DIR);
    fs::create_dir_all(&signals).map_err(|e| Error::io(&signals, e))?;
    write_file(&root.join(MANIFEST_FILE), manifest.to_json().as_bytes())?;

    let mut text = String::from(SCORES_HEADER);
    text.push('\n');
    for s in scores {
        write!(text, "{}", s.subject_id).unwrap();
        for d in Dimension::ALL {
            write!(text, ",{}", s.get(d)).unwrap();
        }
        text.push('\n');
    }
    write_file(&root.join(SCORES_FILE), text.as_bytes())?;

    clips.par_iter().try_for_each(|clip| {
        if clip.left_arm.len() != clip.right_arm.len() {
            return Err(Error::InvalidArgument(format!(
                "channel lengths differ for subject {} clip {}",
                clip.subject_id, clip.clip_id
            )));
        }
        let mut text = String::with_capacity(clip.left_arm.len() * 40);
        text.push_str(SIGNAL_HEADER);
        text.push('\n');
        for (l, r) in clip.left_arm.iter().zip(&clip.right_arm) {
            writeln!(text, "{l},{r}").unwrap();
        }
        write_file(&signals.join(signal_file_name(clip.subject_id, clip.clip_id)), text.as_bytes())
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Synthetic ECG: a Gaussian-bump QRS complex per beat plus a small T wave,
/// with additive white Gaussian noise.
///
/// Beat `k` is centred at `(k + 0.5)` beat periods, so a 10 s trace at 60 bpm
/// holds exactly ten complete beats.
pub fn synth_ecg(
    duration_s: f64,
    sample_rate_hz: u32,
    heart_rate_bpm: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(heart_rate_bpm.is_finite() && heart_rate_bpm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "heart rate must be positive, got {heart_rate_bpm}"
        )));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise std must be non-negative, got {noise_std}"
        )));
    }
    let fs = sample_rate_hz as f64;
    let n = (duration_s * fs).floor();
    if !(n.is_finite() && n >= 1.0) || sample_rate_hz == 0 {
        return Err(Error::InvalidArgument(format!(
            "duration {duration_s} s at {sample_rate_hz} Hz yields no samples"
        )));
    }
    let n = n as usize;
    let period = 60.0 / heart_rate_bpm;

    // (offset from R peak in s, amplitude in mV, width sigma in s)
    const WAVES: [(f64, f64, f64); 4] = [
        (-0.025, -0.12, 0.008), // Q
        (0.0, 1.0, 0.010),      // R
        (0.028, -0.20, 0.009),  // S
        (0.22, 0.25, 0.040),    // T
    ];
    let reach = 0.4;

    let mut out = vec![0.0; n];
    let beats = (n as f64 / fs / period).ceil() as usize + 1;
    for k in 0..beats {
        let centre = (k as f64 + 0.5) * period;
        let lo = (((centre - reach) * fs).floor().max(0.0)) as usize;
        let hi = ((((centre + reach) * fs).ceil()) as usize).min(n);
        for (i, v) in out.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / fs - centre;
            for (offset, amp, sigma) in WAVES {
                let z = (t - offset) / sigma;
                *v += amp * (-0.5 * z * z).exp();
            }
        }
    }

    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("finite non-negative std");
        let mut rng = rng::rng_from(seed, &[]);
        for v in &mut out {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Cut `record` into consecutive non-overlapping segments of `seg_len_s`
/// seconds starting at offset 0. The tail shorter than one segment is
/// dropped; a record shorter than one segment yields no segments.
pub fn segment(record: &EcgRecord, seg_len_s: f64) -> Result<Vec<Segment>> {
    let len = segment_len(seg_len_s, record.sample_rate_hz)?;
    Ok(record
        .samples
        .chunks_exact(len)
        .enumerate()
        .map(|(i, chunk)| Segment {
            subject_id: record.subject_id,
            clip_id: record.clip_id,
            channel: record.channel,
            offset_samples: i * len,
            samples: chunk.to_vec(),
        })
        .collect())
}

/// Segment length in samples, `seg_len_s × sample_rate_hz` rounded to the
/// nearest sample.
pub fn segment_len(seg_len_s: f64, sample_rate_hz: u32) -> Result<usize> {
    let len = (seg_len_s * sample_rate_hz as f64).round();
    if !(seg_len_s.is_finite() && seg_len_s > 0.0 && len >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "segment length {seg_len_s} s is not positive at {sample_rate_hz} Hz"
        )));
    }
    Ok(len as usize)
}

/// Settings for a synthetic dataset whose subjects fall into two heart-rate
/// regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetConfig {
    pub subjects: u32,
    pub clips: u32,
    pub seed: u64,
    pub hr_low_bpm: f64,
    pub hr_high_bpm: f64,
    pub noise_std: f64,
    pub clip_duration_s: f64,
    pub sample_rate_hz: u32,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        SynthDatasetConfig {
            subjects: 10,
            clips: 4,
            seed: 0,
            hr_low_bpm: 60.0,
            hr_high_bpm: 90.0,
            noise_std: 0.002,
            clip_duration_s: 180.0,
            sample_rate_hz: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: Manifest,
    pub scores: Vec<BigFiveScores>,
    pub clips: Vec<ClipSignals>,
}

impl SynthDataset {
    pub fn write(&self, root: &Path) -> Result<()> {
        write_dataset(root, &self.manifest, &self.scores, &self.clips)
    }
}

/// Odd-numbered subjects get the low heart rate and scores at or below every
/// threshold; even-numbered subjects get the high rate and scores above.
pub fn subject_in_high_regime(subject_id: u32) -> bool {
    subject_id % 2 == 0
}

pub fn synth_dataset(config: &SynthDatasetConfig) -> Result<SynthDataset> {
    if config.subjects == 0 || config.clips == 0 {
        return Err(Error::InvalidArgument("need at least one subject and one clip".into()));
    }
    let seed = config.seed;
    let mut scores = Vec::with_capacity(config.subjects as usize);
    for subject_id in 1..=config.subjects {
        let high = subject_in_high_regime(subject_id);
        let mut rng = rng::rng_from(seed, &[0x5c0e, subject_id as u64]);
        let mut values = [0.0; 5];
        for (v, d) in values.iter_mut().zip(Dimension::ALL) {
            let jitter: f64 = rand::Rng::gen_range(&mut rng, 0.1..0.6);
            // Two decimals, like questionnaire means.
            let raw = if high { d.threshold() + jitter } else { d.threshold() - jitter };
            *v = (raw * 100.0).round() / 100.0;
        }
        scores.push(BigFiveScores::new(subject_id, values));
    }

    let pairs: Vec<(u32, u32)> = (1..=config.subjects)
        .flat_map(|s| (1..=config.clips).map(move |c| (s, c)))
        .collect();
    let clips = pairs
        .par_iter()
        .map(|&(subject_id, clip_id)| {
            let hr = if subject_in_high_regime(subject_id) {
                config.hr_high_bpm
            } else {
                config.hr_low_bpm
            };
            let tag = [subject_id as u64, clip_id as u64];
            // Each clip starts at its own point in the cardiac cycle.
            let period = 60.0 / hr;
            let mut phase_rng = rng::rng_from(seed, &[0x9a5e, tag[0], tag[1]]);
            let lead = (rand::Rng::gen_range(&mut phase_rng, 0.0..period) * config.sample_rate_hz as f64) as usize;
            let n = (config.clip_duration_s * config.sample_rate_hz as f64).floor() as usize;
            let lead_s = period + 1.0 / config.sample_rate_hz as f64;
            let left = synth_ecg(
                config.clip_duration_s + lead_s,
                config.sample_rate_hz,
                hr,
                config.noise_std,
                rng::derive_seed(seed, &[0x1ef7, tag[0], tag[1]]),
            )?;
            let right = synth_ecg(
                config.clip_duration_s + lead_s,
                config.sample_rate_hz,
                hr,
                config.noise_std,
                rng::derive_seed(seed, &[0x41e7, tag[0], tag[1]]),
            )?;
            let left_arm = left[lead..lead + n].to_vec();
            // Opposite-polarity lead with its own noise realisation.
            let right_arm = right[lead..lead + n].iter().map(|v| -0.8 * v).collect();
            Ok(ClipSignals {
                subject_id,
                clip_id,
                left_arm,
                right_arm,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SynthDataset {
        manifest: Manifest::new(config.sample_rate_hz, config.subjects, config.clips),
        scores,
        clips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize) -> EcgRecord {
        EcgRecord {
            subject_id: 1,
            clip_id: 1,
            channel: Channel::LeftArm,
            sample_rate_hz: 256,
            samples: (0..n).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn exact_fit_gives_one_segment() {
        let segs = segment(&record(2560), 10.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].offset_samples, 0);
        assert_eq!(segs[0].samples.len(), 2560);
    }

    #[test]
    fn tail_is_dropped() {
        let segs = segment(&record(14976), 10.0).unwrap();
        let offsets: Vec<usize> = segs.iter().map(|s| s.offset_samples).collect();
        assert_eq!(offsets, vec![0, 2560, 5120, 7680, 10240]);
        assert_eq!(14976 - segs.len() * 2560, 2176);
    }

    #[test]
    fn short_record_gives_nothing() {
        assert!(segment(&record(1000), 10.0).unwrap().is_empty());
    }

    #[test]
    fn synth_length_and_determinism() {
        let a = synth_ecg(10.0, 256, 72.0, 0.1, 42).unwrap();
        let b = synth_ecg(10.0, 256, 72.0, 0.1, 42).unwrap();
        assert_eq!(a.len(), 2560);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = synth_ecg(10.0, 256, 72.0, 0.1, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_rejects_bad_rate() {
        assert!(synth_ecg(10.0, 256, 0.0, 0.0, 1).is_err());
        assert!(synth_ecg(10.0, 256, -60.0, 0.0, 1).is_err());
        assert!(synth_ecg(0.001, 256, 60.0, 0.0, 1).is_err());
    }

    #[test]
    fn manifest_json_is_canonical() {
        assert_eq!(
            Manifest::new(256, 58, 36).to_json(),
            "{\"sample_rate_hz\": 256, \"subjects\": 58, \"clips\": 36, \"channels\": [\"left_arm\",\"right_arm\"]}\n"
        );
    }

    #[test]
    fn segment_key_file_stem() {
        let key = SegmentKey {
            subject_id: 3,
            clip_id: 12,
            offset: 5120,
        };
        assert_eq!(key.file_stem(), "S03_C12_O5120");
        assert_eq!(SegmentKey::parse_file_stem("S03_C12_O5120"), Some(key));
        assert_eq!(SegmentKey::parse_file_stem("S03_C12"), None);
    }
}
