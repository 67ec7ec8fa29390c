use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cardiotype::dsp::WindowPreset;
use cardiotype::labels::{BigFiveScores, Granularity};
use cardiotype::signal_io::{self, Channel, SynthDatasetConfig};
use cardiotype::store::{self, ExportFormat, SpectrogramStore, StoreMeta};
use cardiotype::train_eval::{
    self, ExperimentConfig, ExperimentOutput, MetricsReport, ReportFormat, WindowInfo,
};
use cardiotype::{ClipCategory, Dimension, ErrorKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{ExperimentArgs, ReportArgs, RerunArgs, SpectrogramArgs, SynthArgs};
use crate::{EXIT_DATA, EXIT_RUNTIME, EXIT_USAGE};

pub const RUN_JSON: &str = "run.json";
pub const THREADS_ENV: &str = "CARDIOTYPE_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(cardiotype::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Runtime => EXIT_RUNTIME,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<cardiotype::Error> for CliError {
    fn from(e: cardiotype::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// Size the global worker pool from `CARDIOTYPE_THREADS` (0 or unset: one
/// worker per core).
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| usage(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn ensure_empty(dir: &Path, force: bool) -> Result<()> {
    let occupied = match fs::read_dir(dir) {
        Ok(mut entries) => entries.next().is_some(),
        Err(_) => false,
    };
    if occupied && !force {
        return Err(usage(format!(
            "{} is not empty; pass --force to write into it",
            dir.display()
        )));
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if !(a.hr_low > 0.0 && a.hr_high > 0.0) {
        return Err(usage("heart rates must be positive"));
    }
    if a.hr_low >= a.hr_high {
        return Err(usage(format!(
            "--hr-low ({}) must be below --hr-high ({})",
            a.hr_low, a.hr_high
        )));
    }
    ensure_empty(&a.out, a.force)?;
    let config = SynthDatasetConfig {
        subjects: a.subjects,
        clips: a.clips,
        seed: a.seed,
        hr_low_bpm: a.hr_low,
        hr_high_bpm: a.hr_high,
        noise_std: a.noise,
        clip_duration_s: a.duration,
        sample_rate_hz: a.sample_rate,
    };
    let dataset = signal_io::synth_dataset(&config)?;
    dataset.write(&a.out)?;
    println!(
        "wrote {} clips ({} subjects x {} clips, {} s each) to {}",
        dataset.clips.len(),
        a.subjects,
        a.clips,
        a.duration,
        a.out.display()
    );
    Ok(())
}

pub fn spectrogram(a: &SpectrogramArgs) -> Result<()> {
    let preset: WindowPreset = a.config.parse()?;
    let format: ExportFormat = a.format.parse()?;
    let channel: Channel = a.channel.parse()?;
    ensure_empty(&a.out, a.force)?;
    let records = signal_io::load_dataset(&a.data, channel)?;
    let rate = records.first().map(|r| r.sample_rate_hz).unwrap_or(256);
    let seg_len = signal_io::segment_len(a.segment_seconds, rate)?;
    let config = preset.config(seg_len)?;
    let spectrograms = store::generate_spectrograms(&records, &config, a.segment_seconds)?;
    let meta = StoreMeta {
        config,
        channel,
        segment_seconds: a.segment_seconds,
        sample_rate_hz: rate,
        count: spectrograms.len(),
    };
    store::write_store(&a.out, &meta, &spectrograms, format)?;
    println!(
        "config {} ({}, overlap {}): {} spectrograms from {} records -> {}",
        preset,
        meta.label(),
        meta.config.overlap(),
        spectrograms.len(),
        records.len(),
        a.out.display()
    );
    Ok(())
}

/// Everything `rerun` needs to repeat a `train` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub data: PathBuf,
    pub stores: Vec<PathBuf>,
    pub windows: Vec<WindowInfo>,
    pub experiment: ExperimentConfig,
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let dimensions = match a.dimension.as_str() {
        "all" => Dimension::ALL.to_vec(),
        code => vec![code.parse::<Dimension>()?],
    };
    let categories = vec![a.category.parse::<ClipCategory>()?];
    let granularity: Granularity = a.granularity.parse()?;
    let config = ExperimentConfig {
        dimensions,
        categories,
        folds: a.folds,
        granularity,
        train: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch,
            learning_rate: a.lr,
            momentum: a.momentum,
            weight_decay: a.weight_decay,
            seed: a.seed,
            input_size: a.input_size,
        },
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    fs::canonicalize(path).map_err(|e| CliError::Core(cardiotype::Error::io(path, e)))
}

fn load_inputs(data: &Path, stores: &[PathBuf]) -> Result<(Vec<BigFiveScores>, Vec<SpectrogramStore>)> {
    let scores = signal_io::read_scores(data)?;
    let stores = stores
        .iter()
        .map(|dir| store::load_store(dir))
        .collect::<cardiotype::Result<Vec<_>>>()?;
    let mut seen = Vec::new();
    for s in &stores {
        let w = s.meta.config.window_len;
        if seen.contains(&w) {
            return Err(usage(format!("two --store directories hold window {w}")));
        }
        seen.push(w);
    }
    Ok((scores, stores))
}

fn summarise(report: &MetricsReport) {
    for r in &report.results {
        println!(
            "{}: P {} R {} F1 {} ({} examples)",
            r.run.describe(),
            train_eval::format2(r.mean.precision),
            train_eval::format2(r.mean.recall),
            train_eval::format2(r.mean.f1),
            r.examples
        );
    }
}

fn run_training(record: &RunRecord, out: &Path) -> Result<()> {
    let (scores, stores) = load_inputs(&record.data, &record.stores)?;
    eprintln!(
        "training {} run(s) x {} folds",
        stores.len() * record.experiment.dimensions.len() * record.experiment.categories.len(),
        record.experiment.folds
    );
    let output: ExperimentOutput = train_eval::run_experiment(&stores, &scores, &record.experiment)?;
    train_eval::write_outputs(out, &output)?;
    let record = RunRecord {
        windows: output.report.windows.clone(),
        ..record.clone()
    };
    let json = serde_json::to_string_pretty(&record).expect("serialisable") + "\n";
    let path = out.join(RUN_JSON);
    fs::write(&path, json).map_err(|e| CliError::Core(cardiotype::Error::io(&path, e)))?;
    summarise(&output.report);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn train(a: &ExperimentArgs) -> Result<()> {
    let experiment = experiment_config(a)?;
    ensure_empty(&a.out, a.force)?;
    let record = RunRecord {
        command: "train".into(),
        data: absolute(&a.data)?,
        stores: a.stores.iter().map(|s| absolute(s)).collect::<Result<_>>()?,
        windows: Vec::new(),
        experiment,
    };
    run_training(&record, &a.out)
}

pub fn rerun(a: &RerunArgs) -> Result<()> {
    let text = fs::read_to_string(&a.run_json)
        .map_err(|e| CliError::Core(cardiotype::Error::io(&a.run_json, e)))?;
    let record: RunRecord = serde_json::from_str(&text).map_err(|e| {
        CliError::Core(cardiotype::Error::Format(format!("{}: {e}", a.run_json.display())))
    })?;
    if record.command != "train" {
        return Err(usage(format!("cannot rerun a {:?} record", record.command)));
    }
    record.experiment.validate().map_err(|e| usage(e.to_string()))?;
    ensure_empty(&a.out, a.force)?;
    run_training(&record, &a.out)
}

pub fn eval(a: &ExperimentArgs) -> Result<()> {
    let experiment = experiment_config(a)?;
    let (scores, stores) = load_inputs(&a.data, &a.stores)?;
    let loader = train_eval::checkpoint_loader(&a.out);
    let output = train_eval::evaluate_experiment(&stores, &scores, &experiment, loader)?;
    train_eval::write_outputs(&a.out, &output)?;
    summarise(&output.report);
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let path = a.out.join(RUN_JSON);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Core(cardiotype::Error::io(&path, e)))?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Core(cardiotype::Error::Format(format!("{}: {e}", path.display()))))?;
    let rows = train_eval::read_predictions(&a.out, &record.windows)?;
    let report = train_eval::report_from_predictions(&record.experiment, &record.windows, &rows)?;
    train_eval::write_report_files(&a.out, &report)?;
    let format = match a.format.as_str() {
        "csv" => ReportFormat::Csv,
        _ => ReportFormat::Markdown,
    };
    print!("{}", train_eval::render_report(&report, format));
    Ok(())
}
