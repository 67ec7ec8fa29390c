use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

mod commands;
mod settings;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// ECG spectrograms, Big-Five labels and residual CNN training.
#[derive(Debug, Parser)]
#[command(name = "cardiotype", version)]
struct Cli {
    /// key=value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    settings: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with two heart-rate regimes.
    Synth(SynthArgs),
    /// Compute spectrograms for every 10 s segment of a dataset.
    Spectrogram(SpectrogramArgs),
    /// Train and evaluate with k-fold cross-validation.
    Train(ExperimentArgs),
    /// Re-evaluate the checkpoints of an earlier `train` run.
    Eval(ExperimentArgs),
    /// Re-render reports from the predictions of an earlier run.
    Report(ReportArgs),
    /// Repeat a `train` run from its run.json.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub subjects: u32,
    /// Clips per subject.
    #[arg(long, default_value_t = 4)]
    pub clips: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Heart rate of odd-numbered subjects (classes at or below threshold).
    #[arg(long, value_name = "BPM", default_value_t = 60.0)]
    pub hr_low: f64,
    /// Heart rate of even-numbered subjects (classes above threshold).
    #[arg(long, value_name = "BPM", default_value_t = 90.0)]
    pub hr_high: f64,
    /// Standard deviation of the additive Gaussian noise, in mV.
    #[arg(long, value_name = "STD", default_value_t = 0.002)]
    pub noise: f64,
    /// Length of every clip in seconds.
    #[arg(long, value_name = "SECONDS", default_value_t = 180.0)]
    pub duration: f64,
    #[arg(long, value_name = "HZ", default_value_t = 256)]
    pub sample_rate: u32,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    /// Dataset root (manifest.json, scores.csv, signals/).
    #[arg(long)]
    pub data: PathBuf,
    /// Window configuration: a = window 100, b = window 327.
    #[arg(long, default_value = "a", value_parser = ["a", "b"])]
    pub config: String,
    /// Output spectrogram store directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "both", value_parser = ["pgm", "f32", "both"])]
    pub format: String,
    #[arg(long, default_value = "left_arm", value_parser = ["left_arm", "right_arm"])]
    pub channel: String,
    /// Segment length in seconds.
    #[arg(long, value_name = "SECONDS", default_value_t = 10.0)]
    pub segment_seconds: f64,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Dataset root holding scores.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Spectrogram store written by `spectrogram`; repeat for several windows.
    #[arg(long = "store", value_name = "DIR", required = true)]
    pub stores: Vec<PathBuf>,
    /// Run directory for reports, predictions and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "all", value_parser = ["ext", "agr", "con", "ems", "ope", "all"])]
    pub dimension: String,
    #[arg(long, default_value = "all", value_parser = ["all", "hahv", "lahv", "lalv", "halv"])]
    pub category: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.001)]
    pub weight_decay: f64,
    /// Side length the 224×224 spectrograms are resampled to.
    #[arg(long, value_name = "N", default_value_t = 224)]
    pub input_size: usize,
    /// Unit kept together by the stratified split.
    #[arg(long, default_value = "segment", value_parser = ["segment", "subject"])]
    pub granularity: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write into a non-empty run directory (train only).
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory of an earlier `train` or `eval`.
    #[arg(long)]
    pub out: PathBuf,
    /// Table printed to stdout.
    #[arg(long, default_value = "markdown", value_parser = ["markdown", "csv"])]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// run.json written by `train`.
    #[arg(long, value_name = "FILE")]
    pub run_json: PathBuf,
    /// New run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty run directory.
    #[arg(long)]
    pub force: bool,
}

/// Exit statuses.
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let command = Cli::command();
    // A lenient first pass finds the settings file and which flags were
    // typed; required flags may still be missing at this point.
    let first = command.clone().ignore_errors(true).try_get_matches_from(&args)?;
    let path = first.get_one::<PathBuf>("settings").cloned();
    let sub = first.subcommand().map(|(name, m)| (name.to_string(), m.clone()));
    let (Some(path), Some((sub, sub_matches))) = (path, sub) else {
        return Cli::from_arg_matches(&command.try_get_matches_from(args)?);
    };
    let fail = |e: settings::SettingsError| Cli::command().error(clap::error::ErrorKind::ValueValidation, e.0);
    let file = settings::read(&path).map_err(fail)?;
    let extra = settings::overrides(&command, &sub, &sub_matches, &file, &path).map_err(fail)?;
    let mut merged = args;
    merged.extend(extra.into_iter().map(OsString::from));
    Cli::from_arg_matches(&command.try_get_matches_from(merged)?)
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = commands::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Spectrogram(a) => commands::spectrogram(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Report(a) => commands::report(&a),
        Command::Rerun(a) => commands::rerun(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
