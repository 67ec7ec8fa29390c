use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, mean_metrics, ConfusionCounts, Metrics};
use super::report::{render_report, ReportFormat};
use super::trainer::{evaluate_fold, prepare_input, train_fold, FoldOutcome, Prediction};
use crate::labels::{self, ClipCategory, Dimension, FoldPlan, Granularity, LabeledExample};
use crate::nn::{self, ModelParams, ModelSpec, TrainConfig};
use crate::rng;
use crate::labels::BigFiveScores;
use crate::signal_io::SegmentKey;
use crate::store::{SpectrogramStore, StoreMeta};
use crate::{Error, Result};

pub const PREDICTIONS_HEADER: &str =
    "dimension,category,fold,subject_id,clip_id,offset,label,prediction,logit0,logit1";

/// The grid of runs requested by a caller, before it is expanded against the
/// available spectrogram stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimensions: Vec<Dimension>,
    pub categories: Vec<ClipCategory>,
    pub folds: usize,
    pub granularity: Granularity,
    /// `train.seed` is the base seed of the whole experiment.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dimensions: Dimension::ALL.to_vec(),
            categories: vec![ClipCategory::All],
            folds: 10,
            granularity: Granularity::Segment,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() || self.categories.is_empty() {
            return Err(Error::InvalidArgument("no dimension or category selected".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 folds, got {}", self.folds)));
        }
        self.train.validate()
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    /// One run per (store, dimension, category), in that order.
    pub fn runs(&self, windows: &[WindowInfo]) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for w in windows {
            for &dimension in &self.dimensions {
                for &category in &self.categories {
                    let mut train = self.train.clone();
                    train.seed = rng::derive_seed(
                        self.seed(),
                        &[w.window_len as u64, dimension as u64, category as u64],
                    );
                    out.push(RunConfig {
                        window_len: w.window_len,
                        hop: w.hop,
                        dimension,
                        category,
                        folds: self.folds,
                        granularity: self.granularity,
                        plan_seed: rng::derive_seed(
                            self.seed(),
                            &[0x9a17, dimension as u64, category as u64],
                        ),
                        train,
                    });
                }
            }
        }
        out
    }
}

/// A single cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub window_len: usize,
    pub hop: usize,
    pub dimension: Dimension,
    pub category: ClipCategory,
    pub folds: usize,
    pub granularity: Granularity,
    /// Seeds the fold assignment; shared by both window configs so they
    /// see the same splits.
    pub plan_seed: u64,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn describe(&self) -> String {
        format!(
            "window {} / {} / {}",
            self.window_len,
            self.dimension.abbreviation(),
            self.category.label()
        )
    }

    pub fn checkpoint_name(&self, fold: usize) -> String {
        format!("{}_{}_fold{fold:02}.mdlp", self.dimension.code(), self.category.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub window_len: usize,
    pub hop: usize,
}

impl WindowInfo {
    pub fn of(meta: &StoreMeta) -> Self {
        WindowInfo {
            window_len: meta.config.window_len,
            hop: meta.config.hop,
        }
    }

    pub fn dir_name(&self) -> String {
        format!("window_{}", self.window_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_size: usize,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    /// Absent when the report was rebuilt from saved predictions.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: RunConfig,
    pub examples: usize,
    pub folds: Vec<FoldReport>,
    /// Unweighted mean over folds.
    pub mean: Metrics,
}

impl RunResult {
    pub fn degenerate_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.metrics.degenerate).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub windows: Vec<WindowInfo>,
    pub results: Vec<RunResult>,
}

impl MetricsReport {
    pub fn find(
        &self,
        window_len: usize,
        dimension: Dimension,
        category: ClipCategory,
    ) -> Option<&RunResult> {
        self.results.iter().find(|r| {
            r.run.window_len == window_len && r.run.dimension == dimension && r.run.category == category
        })
    }
}

/// A prediction tagged with the run cell and fold that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub window_len: usize,
    pub dimension: Dimension,
    pub category: ClipCategory,
    pub fold: usize,
    pub prediction: Prediction,
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub run: RunConfig,
    pub fold: usize,
    pub params: ModelParams,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub predictions: Vec<PredictionRow>,
    /// Empty when checkpoints were only re-evaluated.
    pub models: Vec<FoldModel>,
    pub spec: ModelSpec,
}

struct Prepared<'a> {
    store: &'a SpectrogramStore,
    images: Vec<Vec<f64>>,
}

struct Cell {
    run: RunConfig,
    store: usize,
    examples: Vec<LabeledExample>,
    plan: FoldPlan,
}

fn prepare_cells(
    stores: &[SpectrogramStore],
    scores: &[BigFiveScores],
    config: &ExperimentConfig,
) -> Result<Vec<Cell>> {
    let windows: Vec<WindowInfo> = stores.iter().map(|s| WindowInfo::of(&s.meta)).collect();
    let mut cells = Vec::new();
    for (i, run) in config.runs(&windows).into_iter().enumerate() {
        let store = i / (config.dimensions.len() * config.categories.len());
        let examples = labels::assemble(&stores[store].keys, scores, run.dimension, run.category)
            .map_err(|e| e.context(run.describe()))?;
        if examples.is_empty() {
            return Err(Error::InsufficientData(format!(
                "{}: no segments from {} clips ({}) in the spectrogram store",
                run.describe(),
                run.category.label(),
                category_span(run.category)
            )));
        }
        let plan = labels::stratified_kfold(&examples, run.folds, run.granularity, run.plan_seed)
            .map_err(|e| e.context(run.describe()))?;
        cells.push(Cell {
            run,
            store,
            examples,
            plan,
        });
    }
    Ok(cells)
}

fn category_span(category: ClipCategory) -> String {
    match category.clip_range() {
        Some(r) => format!("clip ids {}-{}", r.start(), r.end()),
        None => "any clip".into(),
    }
}

/// Expand the grid, run `per_fold` for every (cell, fold) in parallel and
/// merge the outcomes in grid order.
fn run_grid<F>(
    stores: &[SpectrogramStore],
    scores: &[BigFiveScores],
    config: &ExperimentConfig,
    per_fold: F,
) -> Result<ExperimentOutput>
where
    F: Fn(&RunConfig, usize, &[Vec<f64>], &[LabeledExample], &FoldPlan, &ModelSpec) -> Result<FoldOutcome>
        + Sync,
{
    config.validate()?;
    if stores.is_empty() {
        return Err(Error::InsufficientData("no spectrogram store given".into()));
    }
    let spec = ModelSpec::mini_resnet(config.train.input_size);
    spec.validate()?;
    let cells = prepare_cells(stores, scores, config)?;
    let size = config.train.input_size;
    let prepared: Vec<Prepared> = stores
        .iter()
        .map(|store| Prepared {
            store,
            images: store
                .grids
                .par_iter()
                .map(|g| prepare_input(g, store.height(), store.width(), size))
                .collect(),
        })
        .collect();

    let tasks: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, cell)| (0..cell.run.folds).map(move |f| (c, f)))
        .collect();
    let outcomes: Vec<FoldOutcome> = tasks
        .par_iter()
        .map(|&(c, fold)| {
            let cell = &cells[c];
            per_fold(
                &cell.run,
                fold,
                &prepared[cell.store].images,
                &cell.examples,
                &cell.plan,
                &spec,
            )
            .map_err(|e| e.context(format!("{} / fold {fold}", cell.run.describe())))
        })
        .collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(cells.len());
    let mut predictions = Vec::new();
    let mut models = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for cell in &cells {
        let mut folds = Vec::with_capacity(cell.run.folds);
        for _ in 0..cell.run.folds {
            let o = outcomes.next().expect("one outcome per task");
            predictions.extend(o.predictions.iter().map(|&prediction| PredictionRow {
                window_len: cell.run.window_len,
                dimension: cell.run.dimension,
                category: cell.run.category,
                fold: o.fold,
                prediction,
            }));
            folds.push(FoldReport {
                fold: o.fold,
                test_size: o.test_size,
                counts: o.counts,
                metrics: o.metrics,
                final_loss: (!o.epoch_losses.is_empty()).then(|| o.final_loss()),
            });
            if !o.epoch_losses.is_empty() {
                models.push(FoldModel {
                    run: cell.run.clone(),
                    fold: o.fold,
                    params: o.params,
                });
            }
        }
        let mean = mean_metrics(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
        results.push(RunResult {
            run: cell.run.clone(),
            examples: cell.examples.len(),
            folds,
            mean,
        });
    }
    predictions.sort_by(|a, b| {
        (a.window_len, a.dimension, a.category, a.fold, a.prediction.key).cmp(&(
            b.window_len,
            b.dimension,
            b.category,
            b.fold,
            b.prediction.key,
        ))
    });
    let windows = prepared.iter().map(|p| WindowInfo::of(&p.store.meta)).collect();
    Ok(ExperimentOutput {
        report: MetricsReport {
            config: config.clone(),
            windows,
            results,
        },
        predictions,
        models,
        spec,
    })
}

/// Train and evaluate every (store, dimension, category, fold) cell.
/// Results depend only on the inputs and `config.train.seed`.
pub fn run_experiment(
    stores: &[SpectrogramStore],
    scores: &[BigFiveScores],
    config: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    run_grid(stores, scores, config, |run, fold, images, examples, plan, spec| {
        train_fold(images, examples, fold, plan, spec, &run.train)
    })
}

/// Re-evaluate saved checkpoints on the same fold splits; `load` returns the
/// parameters for a (run, fold).
pub fn evaluate_experiment<L>(
    stores: &[SpectrogramStore],
    scores: &[BigFiveScores],
    config: &ExperimentConfig,
    load: L,
) -> Result<ExperimentOutput>
where
    L: Fn(&RunConfig, usize, &ModelSpec) -> Result<ModelParams> + Sync,
{
    run_grid(stores, scores, config, |run, fold, images, examples, plan, spec| {
        let params = load(run, fold, spec)?;
        let (counts, predictions) =
            evaluate_fold(&params, images, examples, fold, plan, spec, run.train.batch_size)?;
        Ok(FoldOutcome {
            fold,
            params,
            epoch_losses: Vec::new(),
            train_size: plan.assignments.len() - predictions.len(),
            test_size: predictions.len(),
            metrics: compute_metrics(&counts),
            counts,
            predictions,
        })
    })
}

/// Checkpoint loader for the layout written by [`write_outputs`].
pub fn checkpoint_loader(out: &Path) -> impl Fn(&RunConfig, usize, &ModelSpec) -> Result<ModelParams> + Sync {
    let out = out.to_path_buf();
    move |run, fold, spec| {
        let path = checkpoint_path(&out, run, fold);
        let (saved, params) = nn::read_checkpoint(&path)?;
        if &saved != spec {
            return Err(Error::Format(format!(
                "{}: checkpoint architecture differs from input size {}",
                path.display(),
                spec.input_size
            )));
        }
        Ok(params)
    }
}

pub fn checkpoint_path(out: &Path, run: &RunConfig, fold: usize) -> PathBuf {
    let window = WindowInfo {
        window_len: run.window_len,
        hop: run.hop,
    };
    out.join(window.dir_name()).join("checkpoints").join(run.checkpoint_name(fold))
}

/// `predictions.csv` body for one window config.
pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut s = String::from(PREDICTIONS_HEADER);
    s.push('\n');
    for r in rows {
        let p = &r.prediction;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.dimension.code(),
            r.category.code(),
            r.fold,
            p.key.subject_id,
            p.key.clip_id,
            p.key.offset,
            p.label,
            p.prediction,
            p.logits[0],
            p.logits[1]
        ));
    }
    s
}

/// Parse a `predictions.csv` written for window config `window_len`.
pub fn parse_predictions_csv(text: &str, window_len: usize, path: &Path) -> Result<Vec<PredictionRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PREDICTIONS_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {PREDICTIONS_HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(path, i + 1, m);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| err(format!("bad integer {s:?}")));
        let real = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        let bit = |s: &str| match num(s)? {
            b @ (0 | 1) => Ok(b as u8),
            b => Err(err(format!("class {b} is not 0 or 1"))),
        };
        rows.push(PredictionRow {
            window_len,
            dimension: f[0].parse().map_err(|e: Error| err(e.to_string()))?,
            category: f[1].parse().map_err(|e: Error| err(e.to_string()))?,
            fold: num(f[2])? as usize,
            prediction: Prediction {
                key: SegmentKey {
                    subject_id: num(f[3])? as u32,
                    clip_id: num(f[4])? as u32,
                    offset: num(f[5])? as usize,
                },
                label: bit(f[6])?,
                prediction: bit(f[7])?,
                logits: [real(f[8])?, real(f[9])?],
            },
        });
    }
    Ok(rows)
}

/// Rebuild the metrics report from saved predictions alone.
pub fn report_from_predictions(
    config: &ExperimentConfig,
    windows: &[WindowInfo],
    rows: &[PredictionRow],
) -> Result<MetricsReport> {
    let mut results = Vec::new();
    for run in config.runs(windows) {
        let mut folds = Vec::with_capacity(run.folds);
        let mut examples = 0;
        for fold in 0..run.folds {
            let pairs: Vec<(u8, u8)> = rows
                .iter()
                .filter(|r| {
                    r.window_len == run.window_len
                        && r.dimension == run.dimension
                        && r.category == run.category
                        && r.fold == fold
                })
                .map(|r| (r.prediction.label, r.prediction.prediction))
                .collect();
            if pairs.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "{} / fold {fold}: no saved predictions",
                    run.describe()
                )));
            }
            examples += pairs.len();
            let counts = ConfusionCounts::from_pairs(pairs.iter().copied());
            folds.push(FoldReport {
                fold,
                test_size: pairs.len(),
                metrics: compute_metrics(&counts),
                counts,
                final_loss: None,
            });
        }
        let mean = mean_metrics(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
        results.push(RunResult {
            run,
            examples,
            folds,
            mean,
        });
    }
    Ok(MetricsReport {
        config: config.clone(),
        windows: windows.to_vec(),
        results,
    })
}

pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "metrics.json";
pub const PREDICTIONS_CSV: &str = "predictions.csv";

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write reports, per-window predictions and (if present) checkpoints:
///
/// ```text
/// out/report.md, out/report.csv, out/metrics.json
/// out/window_{len}/predictions.csv
/// out/window_{len}/checkpoints/{dim}_{cat}_fold{ff}.mdlp
/// ```
pub fn write_outputs(out: &Path, output: &ExperimentOutput) -> Result<()> {
    write_report_files(out, &output.report)?;
    for w in &output.report.windows {
        let rows: Vec<PredictionRow> = output
            .predictions
            .iter()
            .filter(|r| r.window_len == w.window_len)
            .copied()
            .collect();
        write(
            &out.join(w.dir_name()).join(PREDICTIONS_CSV),
            predictions_csv(&rows).as_bytes(),
        )?;
    }
    output.models.par_iter().try_for_each(|m| {
        write(
            &checkpoint_path(out, &m.run, m.fold),
            &nn::encode_checkpoint(&output.spec, &m.params),
        )
    })
}

pub fn write_report_files(out: &Path, report: &MetricsReport) -> Result<()> {
    write(&out.join(REPORT_MD), render_report(report, ReportFormat::Markdown).as_bytes())?;
    write(&out.join(REPORT_CSV), render_report(report, ReportFormat::Csv).as_bytes())?;
    let json = serde_json::to_string_pretty(report).expect("serialisable") + "\n";
    write(&out.join(REPORT_JSON), json.as_bytes())
}

/// Read every `window_*/predictions.csv` below `out`.
pub fn read_predictions(out: &Path, windows: &[WindowInfo]) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    for w in windows {
        let path = out.join(w.dir_name()).join(PREDICTIONS_CSV);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        rows.extend(parse_predictions_csv(&text, w.window_len, &path)?);
    }
    Ok(rows)
}
