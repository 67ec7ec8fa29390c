use serde::{Deserialize, Serialize};

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (label, prediction) in pairs {
            c.record(label, prediction);
        }
        c
    }

    pub fn record(&mut self, label: u8, prediction: u8) {
        match (label, prediction) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (1, 0) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio was 0/0 and was reported as 0.
    pub degenerate: bool,
}

/// Precision, recall and F1; any 0/0 is reported as 0 and flagged.
pub fn compute_metrics(counts: &ConfusionCounts) -> Metrics {
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let tp = counts.tp as f64;
    let precision = ratio(tp, tp + counts.fp as f64);
    let recall = ratio(tp, tp + counts.fn_ as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Metrics {
        precision,
        recall,
        f1,
        degenerate,
    }
}

/// Arithmetic mean of per-fold metrics; flagged if any fold was degenerate.
pub fn mean_metrics(folds: &[Metrics]) -> Metrics {
    if folds.is_empty() {
        return Metrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            degenerate: true,
        };
    }
    let n = folds.len() as f64;
    Metrics {
        precision: folds.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: folds.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: folds.iter().map(|m| m.f1).sum::<f64>() / n,
        degenerate: folds.iter().any(|m| m.degenerate),
    }
}
