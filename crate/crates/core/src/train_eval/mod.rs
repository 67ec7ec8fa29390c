//! k-fold training and evaluation, metrics and report rendering.

mod experiment;
mod metrics;
mod report;
mod trainer;

pub use experiment::{
    checkpoint_loader, checkpoint_path, evaluate_experiment, parse_predictions_csv,
    predictions_csv, read_predictions, report_from_predictions, run_experiment, write_outputs,
    write_report_files, ExperimentConfig, ExperimentOutput, FoldModel, FoldReport, MetricsReport,
    PredictionRow, RunConfig, RunResult, WindowInfo, PREDICTIONS_CSV, PREDICTIONS_HEADER,
    REPORT_CSV, REPORT_JSON, REPORT_MD,
};
pub use metrics::{compute_metrics, mean_metrics, ConfusionCounts, Metrics};
pub use report::{format2, render_report, ReportFormat, REPORT_CSV_HEADER};
pub use trainer::{
    accuracy, evaluate_fold, predict_logits, predicted_class, prepare_input, train_fold,
    train_model, FoldOutcome, Prediction, TrainedModel,
};
