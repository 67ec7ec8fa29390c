//! Spectrogram store: a directory of per-segment files plus `store.json`.
//!
//! ```text
//! dir/store.json                 resolved SpectrogramConfig, channel, segment length, count
//! dir/S{ss}_C{cc}_O{offset}.spec SPEC container (training input)
//! dir/S{ss}_C{cc}_O{offset}.pgm  P5 preview
//! ```

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, Spectrogram, SpectrogramConfig};
use crate::signal_io::{self, Channel, EcgRecord, SegmentKey};
use crate::{Error, Result};

pub const STORE_FILE: &str = "store.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Pgm,
    F32,
    Both,
}

impl ExportFormat {
    fn pgm(self) -> bool {
        matches!(self, ExportFormat::Pgm | ExportFormat::Both)
    }

    fn f32(self) -> bool {
        matches!(self, ExportFormat::F32 | ExportFormat::Both)
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(ExportFormat::Pgm),
            "f32" | "spec" => Ok(ExportFormat::F32),
            "both" => Ok(ExportFormat::Both),
            _ => Err(Error::InvalidArgument(format!("unknown export format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub config: SpectrogramConfig,
    pub channel: Channel,
    pub segment_seconds: f64,
    pub sample_rate_hz: u32,
    pub count: usize,
}

impl StoreMeta {
    /// Human label used in reports, e.g. `window 100 / hop 11`.
    pub fn label(&self) -> String {
        format!("window {} / hop {}", self.config.window_len, self.config.hop)
    }
}

/// Segment every record and compute its log spectrogram. Output follows
/// record order, then segment offset.
pub fn generate_spectrograms(
    records: &[EcgRecord],
    config: &SpectrogramConfig,
    segment_seconds: f64,
) -> Result<Vec<Spectrogram>> {
    let mut segments = Vec::new();
    for record in records {
        segments.extend(signal_io::segment(record, segment_seconds)?);
    }
    segments
        .par_iter()
        .map(|s| dsp::log_spectrogram(s, config))
        .collect()
}

pub fn write_store(
    dir: &Path,
    meta: &StoreMeta,
    spectrograms: &[Spectrogram],
    format: ExportFormat,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    spectrograms.par_iter().try_for_each(|spec| {
        let key = spec
            .source
            .ok_or_else(|| Error::InvalidArgument("spectrogram without provenance".into()))?;
        let stem = key.file_stem();
        if format.f32() {
            dsp::export_f32(spec, &dir.join(format!("{stem}.spec")))?;
        }
        if format.pgm() {
            dsp::export_pgm(spec, &dir.join(format!("{stem}.pgm")))?;
        }
        Ok(())
    })?;
    let json = serde_json::to_string_pretty(meta).expect("serialisable");
    let path = dir.join(STORE_FILE);
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Spectrograms loaded back for training, ordered by segment key.
#[derive(Debug, Clone)]
pub struct SpectrogramStore {
    pub meta: StoreMeta,
    pub keys: Vec<SegmentKey>,
    /// Row-major `height × width` grids, DC row first.
    pub grids: Vec<Vec<f32>>,
}

impl SpectrogramStore {
    pub fn height(&self) -> usize {
        self.meta.config.target_height
    }

    pub fn width(&self) -> usize {
        self.meta.config.target_width
    }

    /// Build an in-memory store without touching disk.
    pub fn from_spectrograms(meta: StoreMeta, spectrograms: &[Spectrogram]) -> Result<Self> {
        let mut items: Vec<(SegmentKey, Vec<f32>)> = spectrograms
            .iter()
            .map(|s| {
                let key = s
                    .source
                    .ok_or_else(|| Error::InvalidArgument("spectrogram without provenance".into()))?;
                Ok((key, s.values.iter().map(|&v| v as f32).collect()))
            })
            .collect::<Result<_>>()?;
        items.sort_by_key(|(k, _)| *k);
        let (keys, grids) = items.into_iter().unzip();
        Ok(SpectrogramStore { meta, keys, grids })
    }
}

pub fn load_store(dir: &Path) -> Result<SpectrogramStore> {
    let meta_path = dir.join(STORE_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: StoreMeta = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;

    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".spec")) else {
            continue;
        };
        if let Some(key) = SegmentKey::parse_file_stem(stem) {
            files.push((key, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} holds no .spec spectrograms",
            dir.display()
        )));
    }
    files.sort();
    let (h, w) = (meta.config.target_height, meta.config.target_width);
    let grids = files
        .par_iter()
        .map(|(_, path)| {
            let grid = dsp::read_f32(path)?;
            if (grid.height, grid.width) != (h, w) {
                return Err(Error::Format(format!(
                    "{}: {}x{} grid in a {h}x{w} store",
                    path.display(),
                    grid.height,
                    grid.width
                )));
            }
            Ok(grid.values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrogramStore {
        meta,
        keys: files.into_iter().map(|(k, _)| k).collect(),
        grids,
    })
}
