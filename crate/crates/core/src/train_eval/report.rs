use std::fmt::Write;

use super::experiment::{MetricsReport, RunResult, WindowInfo};
use crate::labels::{ClipCategory, Dimension};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

/// Two decimals, rounding half away from zero.
pub fn format2(value: f64) -> String {
    let hundredths = (value * 100.0).round();
    let sign = if hundredths < 0.0 { "-" } else { "" };
    let n = hundredths.abs() as u64;
    format!("{sign}{}.{:02}", n / 100, n % 100)
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
    }
}

pub const REPORT_CSV_HEADER: &str =
    "window_len,hop,dimension,category,precision,recall,f1,folds,degenerate_folds";

fn render_csv(report: &MetricsReport) -> String {
    let mut s = String::from(REPORT_CSV_HEADER);
    s.push('\n');
    for r in &report.results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.run.window_len,
            r.run.hop,
            r.run.dimension.code(),
            r.run.category.code(),
            format2(r.mean.precision),
            format2(r.mean.recall),
            format2(r.mean.f1),
            r.folds.len(),
            r.degenerate_folds()
        );
    }
    s
}

fn dimensions_in(report: &MetricsReport) -> Vec<Dimension> {
    Dimension::ALL
        .into_iter()
        .filter(|d| report.results.iter().any(|r| r.run.dimension == *d))
        .collect()
}

fn has_category(report: &MetricsReport, category: ClipCategory) -> bool {
    report.results.iter().any(|r| r.run.category == category)
}

fn cell(result: Option<&RunResult>, pick: impl Fn(&RunResult) -> f64) -> String {
    result.map(|r| format2(pick(r))).unwrap_or_else(|| "-".into())
}

fn render_markdown(report: &MetricsReport) -> String {
    let c = &report.config;
    let t = &c.train;
    let mut s = String::from("# Personality classification report\n\n");
    let _ = writeln!(
        s,
        "Mean over {} folds ({}-level stratified split), seed {}.",
        c.folds, c.granularity, t.seed
    );
    let _ = writeln!(
        s,
        "Training: {} epochs, batch {}, learning rate {}, momentum {}, weight decay {}, input {}x{}.",
        t.epochs, t.batch_size, t.learning_rate, t.momentum, t.weight_decay, t.input_size, t.input_size
    );
    s.push_str("Positive class: score above the dimension threshold.\n");

    let dims = dimensions_in(report);
    let missing: Vec<&str> = ClipCategory::ALL
        .into_iter()
        .filter(|&cat| !has_category(report, cat))
        .map(|cat| cat.label())
        .collect();

    for category in ClipCategory::ALL.into_iter().filter(|&cat| has_category(report, cat)) {
        let _ = write!(s, "\n## Precision, recall and F1 ({} clips)\n\n| Trait |", category.label());
        for w in &report.windows {
            let _ = write!(s, " P w{0} | R w{0} | F1 w{0} |", w.window_len);
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(3 * report.windows.len()));
        s.push('\n');
        for &d in &dims {
            let _ = write!(s, "| {} |", d.name());
            for w in &report.windows {
                let r = report.find(w.window_len, d, category);
                let _ = write!(
                    s,
                    " {} | {} | {} |",
                    cell(r, |r| r.mean.precision),
                    cell(r, |r| r.mean.recall),
                    cell(r, |r| r.mean.f1)
                );
            }
            s.push('\n');
        }
    }

    for w in &report.windows {
        render_category_grid(&mut s, report, w, &dims, &missing);
    }

    let degenerate: Vec<&RunResult> =
        report.results.iter().filter(|r| r.degenerate_folds() > 0).collect();
    if !degenerate.is_empty() {
        s.push_str("\n## Degenerate folds\n\nFolds where a 0/0 ratio was reported as 0:\n\n");
        for r in degenerate {
            let _ = writeln!(
                s,
                "- window {}, {}, {}: {} of {} folds",
                r.run.window_len,
                r.run.dimension.abbreviation(),
                r.run.category.label(),
                r.degenerate_folds(),
                r.folds.len()
            );
        }
    }
    s
}

fn render_category_grid(
    s: &mut String,
    report: &MetricsReport,
    w: &WindowInfo,
    dims: &[Dimension],
    missing: &[&str],
) {
    let _ = write!(
        s,
        "\n## F1 by clip category (window {} / hop {})\n\n| Video |",
        w.window_len, w.hop
    );
    for d in dims {
        let _ = write!(s, " {} |", d.abbreviation());
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(dims.len()));
    s.push('\n');
    for category in ClipCategory::ALL.into_iter().filter(|&c| has_category(report, c)) {
        let _ = write!(s, "| {} |", category.label());
        for &d in dims {
            let _ = write!(s, " {} |", cell(report.find(w.window_len, d, category), |r| r.mean.f1));
        }
        s.push('\n');
    }
    if !missing.is_empty() {
        let _ = write!(s, "\nNo results for {} clips.\n", missing.join(", "));
    }
}
