use std::collections::BTreeMap;
use std::fs;
use std::ops::AddAssign;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate_detection, aggregate_severity, detection_metrics, mean_sd, multiclass_metrics,
    BinaryConfusion, DetectionMetrics, EvalError, MulticlassConfusion,
};
use crate::model::{classify_detection, classify_severity, ModelConfig, Task};
use crate::training::{
    predict_set, segment_accuracy, write_log, Targets, TrainConfig, TrainLog, Trainer,
};
use crate::vgrf::{Dataset, Group, SensorChannel, SeverityClass};
use crate::windowing::{materialize_fold, FoldPlan, WindowParams};

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub window: WindowParams,
    /// Per-fold logs, checkpoints and predictions go under this directory.
    pub out_dir: Option<PathBuf>,
    /// Maximum number of folds trained concurrently.
    pub jobs: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            window: WindowParams::default(),
            out_dir: None,
            jobs: 1,
        }
    }
}

/// Confusion counts for either task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Confusion {
    Detection(BinaryConfusion),
    Severity(MulticlassConfusion),
}

impl Confusion {
    pub fn empty(task: Task) -> Self {
        match task {
            Task::Detection => Confusion::Detection(BinaryConfusion::default()),
            Task::Severity => Confusion::Severity(MulticlassConfusion::default()),
        }
    }

    /// Records one decision. Labels are 0/1 (Control/Parkinson) for
    /// detection and 0-based class indices for severity.
    pub fn record(&mut self, truth: usize, predicted: usize) {
        match self {
            Confusion::Detection(cm) => cm.record(group_of(truth), group_of(predicted)),
            Confusion::Severity(cm) => cm.record(class_of(truth), class_of(predicted)),
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        match self {
            Confusion::Detection(cm) => detection_metrics(cm).accuracy,
            Confusion::Severity(cm) => multiclass_metrics(cm).accuracy,
        }
    }

    pub fn total(&self) -> u64 {
        match self {
            Confusion::Detection(cm) => cm.total(),
            Confusion::Severity(cm) => cm.total(),
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, other: Self) {
        match (self, other) {
            (Confusion::Detection(a), Confusion::Detection(b)) => *a += b,
            (Confusion::Severity(a), Confusion::Severity(b)) => *a += b,
            _ => panic!("cannot pool confusion matrices of different tasks"),
        }
    }
}

fn group_of(label: usize) -> Group {
    if label == 1 {
        Group::Parkinson
    } else {
        Group::Control
    }
}

fn class_of(index: usize) -> SeverityClass {
    SeverityClass::from_index(index).expect("severity class index")
}

/// The decision for one validation walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPrediction {
    pub walk_id: String,
    pub subject_id: String,
    pub fold: usize,
    pub truth: usize,
    pub predicted: usize,
    /// Window votes per label.
    pub votes: Vec<usize>,
}

impl WalkPrediction {
    pub fn windows(&self) -> usize {
        self.votes.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    /// Eval-mode accuracy of the final weights on the training windows.
    pub train_segment_accuracy: f64,
    pub segment: Confusion,
    pub walk: Confusion,
    pub walks: Vec<WalkPrediction>,
    pub log: TrainLog,
}

/// Pooled cross-validation results.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub task: Task,
    pub folds: Vec<FoldResult>,
    /// Window-level counts over every fold's validation windows.
    pub segment: Confusion,
    /// Walk-level (voted) counts over every fold's validation walks.
    pub subject: Confusion,
}

impl CvReport {
    fn per_fold(&self, f: impl Fn(&Confusion) -> Option<f64>) -> Option<(f64, f64)> {
        let values: Vec<f64> = self.folds.iter().filter_map(|r| f(&r.walk)).collect();
        mean_sd(&values)
    }

    /// Mean and standard deviation across folds of walk-level accuracy.
    pub fn fold_accuracy(&self) -> Option<MeanSd> {
        self.per_fold(Confusion::accuracy)
    }

    /// Across-fold mean and SD of walk-level sensitivity and specificity
    /// (detection only).
    pub fn fold_detection_spread(&self) -> (Option<MeanSd>, Option<MeanSd>) {
        let metric = |pick: fn(&DetectionMetrics) -> Option<f64>| {
            move |c: &Confusion| match c {
                Confusion::Detection(cm) => pick(&detection_metrics(cm)),
                Confusion::Severity(_) => None,
            }
        };
        (
            self.per_fold(metric(|m| m.sensitivity)),
            self.per_fold(metric(|m| m.specificity)),
        )
    }

    pub fn walk_predictions(&self) -> impl Iterator<Item = &WalkPrediction> {
        self.folds.iter().flat_map(|f| f.walks.iter())
    }
}

/// Training seed of fold `fold`, derived from the run seed.
/// Mean and population standard deviation.
pub type MeanSd = (f64, f64);

pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add((fold as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run_fold(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    options: &CvOptions,
) -> Result<FoldResult, EvalError> {
    let task = model.task;
    let (mut train, mut val) = materialize_fold(dataset, plan, fold, &options.window)?;
    if task == Task::Severity {
        train.retain(|w| w.severity_label().is_some());
        val.retain(|w| w.severity_label().is_some());
    }
    if val.is_empty() {
        return Err(EvalError::EmptyValidation(fold));
    }
    let fold_dir = options
        .out_dir
        .as_ref()
        .map(|d| d.join(format!("fold_{fold}")));
    let mut trainer = Trainer::new(
        model.clone(),
        TrainConfig {
            seed: fold_seed(train_cfg.seed, fold),
            ..*train_cfg
        },
    );
    if let Some(dir) = &fold_dir {
        trainer = trainer.with_checkpoint_dir(dir.join("checkpoints"));
    }
    info!(
        "fold {fold}: {} training / {} validation windows",
        train.len(),
        val.len()
    );
    let (network, log) = trainer
        .run(&train, &val)
        .map_err(|source| EvalError::Fold { fold, source })?;

    let train_segment_accuracy = Targets::for_windows(task, &train)
        .and_then(|t| {
            Ok(segment_accuracy(
                &network,
                &train,
                &t,
                train_cfg.batch_size,
            )?)
        })
        .map_err(|source| EvalError::Fold { fold, source })?;

    let units = task.output_units();
    let probs = predict_set(&network, &val, train_cfg.batch_size).map_err(|e| EvalError::Fold {
        fold,
        source: e.into(),
    })?;
    let mut segment = Confusion::empty(task);
    let mut by_walk: BTreeMap<&str, (usize, &str, Vec<usize>)> = BTreeMap::new();
    for (window, row) in val.windows.iter().zip(probs.chunks_exact(units)) {
        let (truth, predicted) = match task {
            Task::Detection => (
                usize::from(window.detection_label().label()),
                usize::from(classify_detection(row[0]).label()),
            ),
            Task::Severity => (
                window.severity_label().expect("filtered above").index(),
                classify_severity(row).index(),
            ),
        };
        segment.record(truth, predicted);
        by_walk
            .entry(window.walk_id())
            .or_insert_with(|| (truth, window.subject_id(), Vec::new()))
            .2
            .push(predicted);
    }

    let mut walk_confusion = Confusion::empty(task);
    let mut walks = Vec::with_capacity(by_walk.len());
    for (walk_id, (truth, subject_id, labels)) in by_walk {
        let predicted = match task {
            Task::Detection => {
                let groups: Vec<Group> = labels.iter().map(|l| group_of(*l)).collect();
                usize::from(aggregate_detection(&groups)?.label())
            }
            Task::Severity => {
                let classes: Vec<SeverityClass> = labels.iter().map(|l| class_of(*l)).collect();
                aggregate_severity(&classes)?.index()
            }
        };
        walk_confusion.record(truth, predicted);
        let mut votes = vec![0; units.max(2)];
        for l in &labels {
            votes[*l] += 1;
        }
        walks.push(WalkPrediction {
            walk_id: walk_id.to_string(),
            subject_id: subject_id.to_string(),
            fold,
            truth,
            predicted,
            votes,
        });
    }

    if let Some(dir) = &fold_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("train_log.csv");
        write_log(&log, &path).map_err(|source| EvalError::Fold { fold, source })?;
    }
    info!(
        "fold {fold}: walk accuracy {:.4}, segment accuracy {:.4}",
        walk_confusion.accuracy().unwrap_or(f64::NAN),
        segment.accuracy().unwrap_or(f64::NAN)
    );
    Ok(FoldResult {
        fold,
        train_windows: train.len(),
        val_windows: val.len(),
        train_segment_accuracy,
        segment,
        walk: walk_confusion,
        walks,
        log,
    })
}

/// Trains one model per fold and pools every fold's validation decisions.
pub fn run_cv(
    dataset: &Dataset,
    plan: &FoldPlan,
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    options: &CvOptions,
) -> Result<CvReport, EvalError> {
    model
        .validate()
        .map_err(|e| EvalError::Invalid(e.to_string()))?;
    if model.window_len != options.window.window_len {
        return Err(EvalError::Invalid(format!(
            "model window length {} differs from windowing length {}",
            model.window_len, options.window.window_len
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| EvalError::Invalid(e.to_string()))?;
    let results: Vec<Result<FoldResult, EvalError>> = pool.install(|| {
        (0..plan.k())
            .into_par_iter()
            .map(|fold| run_fold(dataset, plan, fold, model, train_cfg, options))
            .collect()
    });
    let folds: Vec<FoldResult> = results.into_iter().collect::<Result<_, _>>()?;
    let mut segment = Confusion::empty(model.task);
    let mut subject = Confusion::empty(model.task);
    for f in &folds {
        segment += f.segment;
        subject += f.walk;
    }
    Ok(CvReport {
        task: model.task,
        folds,
        segment,
        subject,
    })
}

/// The left-foot member of each symmetric sensor pair.
pub fn ablation_pairs() -> Vec<SensorChannel> {
    SensorChannel::ALL
        .iter()
        .copied()
        .filter(|c| c.index() < 8 || *c == SensorChannel::LTotal)
        .collect()
}

/// Short name of a pair: `L3R3`, or `Total` for the total-force pair.
pub fn pair_name(channel: SensorChannel) -> String {
    if channel.is_total() {
        "Total".to_string()
    } else {
        let left = if channel.index() < 8 {
            channel
        } else {
            channel.pair()
        };
        format!("{left}{}", left.pair())
    }
}

/// Parses `L3R3`, `R3L3`, `Total` or `LTotalRTotal` into the pair's left
/// channel.
pub fn parse_pair(name: &str) -> Result<SensorChannel, String> {
    ablation_pairs()
        .into_iter()
        .find(|c| {
            let canonical = pair_name(*c);
            let swapped = format!("{}{}", c.pair(), c);
            let long = format!("{}{}", c, c.pair());
            [canonical, swapped, long]
                .iter()
                .any(|n| n.eq_ignore_ascii_case(name))
        })
        .ok_or_else(|| {
            let valid: Vec<String> = ablation_pairs().into_iter().map(pair_name).collect();
            format!(
                "unknown sensor pair '{name}'; valid pairs: {}",
                valid.join(", ")
            )
        })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub removed: SensorChannel,
    pub channels: usize,
    pub segment: BinaryConfusion,
    pub metrics: DetectionMetrics,
}

impl AblationRow {
    pub fn label(&self) -> String {
        if self.removed.is_total() {
            "w/o Total VGRF (R & L)".to_string()
        } else {
            format!("w/o {} & {}", self.removed, self.removed.pair())
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Retrains the detection model once per removed pair, each a full
/// cross-validation over the remaining channels, and reports window-level
/// metrics.
pub fn run_ablation(
    dataset: &Dataset,
    plan: &FoldPlan,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    pairs: &[SensorChannel],
    options: &CvOptions,
) -> Result<AblationReport, EvalError> {
    if base.task != Task::Detection {
        return Err(EvalError::Invalid(
            "ablation runs on the detection task".to_string(),
        ));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for &pair in pairs {
        let config = base.without_pair(pair);
        let run_options = CvOptions {
            out_dir: options
                .out_dir
                .as_ref()
                .map(|d| d.join(format!("without_{}", pair_name(pair)))),
            ..options.clone()
        };
        info!(
            "ablation: removing {} ({} channels left)",
            pair_name(pair),
            config.channels.len()
        );
        let report = run_cv(dataset, plan, &config, train_cfg, &run_options)?;
        let Confusion::Detection(segment) = report.segment else {
            unreachable!("detection task");
        };
        rows.push(AblationRow {
            removed: pair,
            channels: config.channels.len(),
            segment,
            metrics: detection_metrics(&segment),
        });
    }
    Ok(AblationReport { rows })
}
