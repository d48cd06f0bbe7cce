//! Metrics, window-to-walk vote aggregation, cross-validation and the
//! sensor-pair ablation study.

mod cv;
mod predict;
mod report;

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::TensorError;
use crate::training::TrainError;
use crate::vgrf::{Group, SeverityClass};
use crate::windowing::FoldError;

pub use cv::{
    ablation_pairs, fold_seed, pair_name, parse_pair, run_ablation, run_cv, AblationReport,
    AblationRow, Confusion, CvOptions, CvReport, FoldResult, MeanSd, WalkPrediction,
};
pub use predict::{Predictor, WalkDecision};
pub use report::{
    ablation_csv, ablation_table, detection_csv, detection_table, normalized_confusion_csv,
    predictions_csv, severity_confusion_table, severity_csv, severity_table,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot aggregate an empty set of window predictions")]
    EmptyPredictionSet,
    #[error("walk has no full windows (needs at least {0} samples)")]
    NoFullWindows(usize),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: TrainError,
    },
    #[error(transparent)]
    Windowing(#[from] FoldError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("fold {0} has no validation windows for this task")]
    EmptyValidation(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Invalid(String),
}

/// Counts for the binary task, Parkinson being the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl BinaryConfusion {
    pub fn new(tp: u64, fn_: u64, tn: u64, fp: u64) -> Self {
        BinaryConfusion { tp, fn_, tn, fp }
    }

    pub fn record(&mut self, truth: Group, predicted: Group) {
        match (truth, predicted) {
            (Group::Parkinson, Group::Parkinson) => self.tp += 1,
            (Group::Parkinson, Group::Control) => self.fn_ += 1,
            (Group::Control, Group::Control) => self.tn += 1,
            (Group::Control, Group::Parkinson) => self.fp += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }
}

impl AddAssign for BinaryConfusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.fp += o.fp;
    }
}

/// Sensitivity, specificity and accuracy as fractions; `None` where the
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn detection_metrics(cm: &BinaryConfusion) -> DetectionMetrics {
    DetectionMetrics {
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

/// 5x5 counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticlassConfusion {
    pub counts: [[u64; SeverityClass::COUNT]; SeverityClass::COUNT],
}

impl MulticlassConfusion {
    pub fn from_counts(counts: [[u64; SeverityClass::COUNT]; SeverityClass::COUNT]) -> Self {
        MulticlassConfusion { counts }
    }

    pub fn record(&mut self, truth: SeverityClass, predicted: SeverityClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Rows scaled to percentages of each class's support.
    pub fn normalized(&self) -> [[Option<f64>; SeverityClass::COUNT]; SeverityClass::COUNT] {
        let mut out = [[None; SeverityClass::COUNT]; SeverityClass::COUNT];
        for (i, row) in self.counts.iter().enumerate() {
            let n = self.support(i);
            for (j, c) in row.iter().enumerate() {
                out[i][j] = ratio(*c, n).map(|r| 100.0 * r);
            }
        }
        out
    }
}

impl AddAssign for MulticlassConfusion {
    fn add_assign(&mut self, o: Self) {
        for (a, b) in self
            .counts
            .iter_mut()
            .flatten()
            .zip(o.counts.iter().flatten())
        {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub per_class: Vec<ClassMetrics>,
    /// Support-weighted averages; undefined per-class values count as 0.
    pub weighted_precision: Option<f64>,
    pub weighted_recall: Option<f64>,
    pub weighted_f1: Option<f64>,
    /// Trace over total, equal to the weighted recall.
    pub accuracy: Option<f64>,
    pub total: u64,
}

pub fn multiclass_metrics(cm: &MulticlassConfusion) -> MulticlassMetrics {
    let per_class: Vec<ClassMetrics> = (0..SeverityClass::COUNT)
        .map(|k| {
            let tp = cm.counts[k][k];
            let precision = ratio(tp, cm.predicted(k));
            let recall = ratio(tp, cm.support(k));
            let f1 = match (precision, recall) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: cm.support(k),
            }
        })
        .collect();
    let total = cm.total();
    let weighted = |f: fn(&ClassMetrics) -> Option<f64>| {
        (total > 0).then(|| {
            per_class
                .iter()
                .map(|c| c.support as f64 * f(c).unwrap_or(0.0))
                .sum::<f64>()
                / total as f64
        })
    };
    let trace: u64 = (0..SeverityClass::COUNT).map(|k| cm.counts[k][k]).sum();
    MulticlassMetrics {
        weighted_precision: weighted(|c| c.precision),
        weighted_recall: weighted(|c| c.recall),
        weighted_f1: weighted(|c| c.f1),
        accuracy: ratio(trace, total),
        per_class,
        total,
    }
}

/// Walk-level detection vote: Parkinson when at least half of the windows
/// say Parkinson (a strict majority, with exact ties resolved toward
/// Parkinson).
pub fn aggregate_detection(windows: &[Group]) -> Result<Group, EvalError> {
    if windows.is_empty() {
        return Err(EvalError::EmptyPredictionSet);
    }
    let parkinson = windows.iter().filter(|g| **g == Group::Parkinson).count();
    Ok(if 2 * parkinson >= windows.len() {
        Group::Parkinson
    } else {
        Group::Control
    })
}

/// Walk-level severity: the most frequent window class, ties resolved
/// toward the more severe class.
pub fn aggregate_severity(windows: &[SeverityClass]) -> Result<SeverityClass, EvalError> {
    if windows.is_empty() {
        return Err(EvalError::EmptyPredictionSet);
    }
    let mut counts = [0usize; SeverityClass::COUNT];
    for c in windows {
        counts[c.index()] += 1;
    }
    let mut best = 0;
    for (i, n) in counts.iter().enumerate() {
        if *n >= counts[best] {
            best = i;
        }
    }
    Ok(SeverityClass::from_index(best).expect("five classes"))
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
