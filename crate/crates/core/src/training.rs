//! Mini-batch Nadam training with patience-based early stopping.
//!
//! A run is a sequence of rounds. Each round trains until the validation
//! segment accuracy has not strictly improved for `patience` epochs, then
//! restores the best weights seen so far and halves the learning rate.
//! After `lr_halvings` restarts the final round ends the same way and the
//! best weights are returned.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{
    binary_cross_entropy, categorical_cross_entropy, Nadam, NadamConfig, Tensor, TensorError,
};
use crate::model::{
    classify_detection, classify_severity, save_params, CheckpointError, ConfigError, ModelConfig,
    Network, Task,
};
use crate::windowing::{check_disjoint, FoldError, WindowSet};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}{}", snapshot_note(.snapshot))]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        snapshot: Option<PathBuf>,
    },
    #[error("subject {0} appears in both training and validation data")]
    SubjectLeakage(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("walk {0} has no severity label")]
    MissingSeverityLabel(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn snapshot_note(snapshot: &Option<PathBuf>) -> String {
    snapshot
        .as_ref()
        .map(|p| format!(" (weights saved to {})", p.display()))
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    /// Epochs without improvement before a round ends.
    pub patience: usize,
    /// Number of restarts at half the previous learning rate.
    pub lr_halvings: usize,
    pub max_epochs_per_round: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 800,
            initial_lr: 1e-3,
            patience: 10,
            lr_halvings: 4,
            max_epochs_per_round: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::InvalidConfig(what.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.initial_lr.is_finite() && self.initial_lr >= 0.0) {
            return bad("initial_lr must be finite and non-negative");
        }
        if self.patience == 0 || self.max_epochs_per_round == 0 {
            return bad("patience and max_epochs_per_round must be positive");
        }
        Ok(())
    }

    /// Learning rate of round `round` (0-based).
    pub fn lr_for_round(&self, round: usize) -> f64 {
        self.initial_lr / 2f64.powi(round as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Continue,
    /// Restore the weights of `restore_epoch` and start the next round.
    EndRound {
        restore_epoch: usize,
    },
    /// Restore the weights of `restore_epoch` and stop.
    Finish {
        restore_epoch: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    /// This epoch set a new best; its weights should be kept.
    pub improved: bool,
    pub action: Action,
}

/// The early-stopping and learning-rate schedule, driven one validation
/// score at a time.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    config: TrainConfig,
    round: usize,
    epochs_in_round: usize,
    since_improvement: usize,
    best: Option<(f64, usize)>,
    finished: bool,
}

impl EarlyStopping {
    pub fn new(config: TrainConfig) -> Self {
        EarlyStopping {
            config,
            round: 0,
            epochs_in_round: 0,
            since_improvement: 0,
            best: None,
            finished: false,
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn lr(&self) -> f64 {
        self.config.lr_for_round(self.round)
    }

    /// Best score so far and the epoch it was reached.
    pub fn best(&self) -> Option<(f64, usize)> {
        self.best
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Records the validation score of `epoch`. Only a strictly greater
    /// score counts as an improvement.
    pub fn observe(&mut self, epoch: usize, val_acc: f64) -> Decision {
        assert!(!self.finished, "schedule already finished");
        self.epochs_in_round += 1;
        let improved = self.best.is_none_or(|(best, _)| val_acc > best);
        if improved {
            self.best = Some((val_acc, epoch));
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        let round_over = self.since_improvement >= self.config.patience
            || self.epochs_in_round >= self.config.max_epochs_per_round;
        let restore_epoch = self.best.map_or(epoch, |(_, e)| e);
        let action = if !round_over {
            Action::Continue
        } else if self.round >= self.config.lr_halvings {
            self.finished = true;
            Action::Finish { restore_epoch }
        } else {
            self.round += 1;
            self.epochs_in_round = 0;
            self.since_improvement = 0;
            Action::EndRound { restore_epoch }
        };
        Decision { improved, action }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub round: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_seg_acc: f64,
    pub val_seg_acc: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// `(round, last epoch of the round, epoch whose weights were restored)`.
    pub round_ends: Vec<(usize, usize, usize)>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,round,lr,train_loss,train_seg_acc,val_seg_acc,wallclock_s\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                r.epoch, r.round, r.lr, r.train_loss, r.train_seg_acc, r.val_seg_acc, r.wallclock_s
            );
        }
        out
    }
}

/// Per-window training targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Binary(Vec<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn for_windows(task: Task, set: &WindowSet) -> Result<Self, TrainError> {
        Ok(match task {
            Task::Detection => Targets::Binary(
                set.windows
                    .iter()
                    .map(|w| f64::from(w.detection_label().label()))
                    .collect(),
            ),
            Task::Severity => Targets::Classes(
                set.windows
                    .iter()
                    .map(|w| {
                        w.severity_label().map(|c| c.index()).ok_or_else(|| {
                            TrainError::MissingSeverityLabel(w.walk_id().to_string())
                        })
                    })
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Binary(t) => t.len(),
            Targets::Classes(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the network output row `probs` classifies window `index`
    /// correctly.
    pub fn is_correct(&self, index: usize, probs: &[f64]) -> bool {
        match self {
            Targets::Binary(t) => f64::from(classify_detection(probs[0]).label()) == t[index],
            Targets::Classes(t) => classify_severity(probs).index() == t[index],
        }
    }

    fn loss(&self, probs: &Tensor, indices: &[usize]) -> Result<(f64, Tensor), TensorError> {
        match self {
            Targets::Binary(t) => {
                let batch: Vec<f64> = indices.iter().map(|&i| t[i]).collect();
                binary_cross_entropy(probs, &batch)
            }
            Targets::Classes(t) => {
                let batch: Vec<usize> = indices.iter().map(|&i| t[i]).collect();
                categorical_cross_entropy(probs, &batch)
            }
        }
    }
}

/// Eval-mode network outputs for every window of `set`, row-major
/// `[windows, output_units]`.
pub fn predict_set(
    network: &Network,
    set: &WindowSet,
    batch_size: usize,
) -> Result<Vec<f64>, TensorError> {
    let channels = network.config().channel_indices();
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len() * network.task().output_units());
    let mut buf = Vec::new();
    for chunk in indices.chunks(batch_size.max(1)) {
        set.fill_batch(chunk, &channels, &mut buf);
        let x = Tensor::from_vec(
            &[chunk.len(), set.window_len, channels.len()],
            std::mem::take(&mut buf),
        )?;
        out.extend_from_slice(network.predict(&x)?.data());
        buf = x.into_data();
    }
    Ok(out)
}

/// Fraction of windows classified correctly.
pub fn segment_accuracy(
    network: &Network,
    set: &WindowSet,
    targets: &Targets,
    batch_size: usize,
) -> Result<f64, TensorError> {
    let units = network.task().output_units();
    let probs = predict_set(network, set, batch_size)?;
    let correct = probs
        .chunks_exact(units)
        .enumerate()
        .filter(|(i, row)| targets.is_correct(*i, row))
        .count();
    Ok(correct as f64 / set.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub segment_accuracy: f64,
    pub steps: usize,
}

/// One pass over `train` in `order`, one Nadam step per batch (the last
/// batch may be partial). Accuracy is measured on the training forward
/// passes, dropout included.
#[allow(clippy::too_many_arguments)]
pub fn epoch(
    network: &mut Network,
    optimizer: &mut Nadam,
    train: &WindowSet,
    targets: &Targets,
    order: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    epoch_index: usize,
) -> Result<EpochStats, TrainError> {
    let channels = network.config().channel_indices();
    let units = network.task().output_units();
    let mut buf = Vec::new();
    let mut loss_sum = 0.0;
    let mut correct = 0;
    let mut steps = 0;
    for (batch_index, chunk) in order.chunks(batch_size).enumerate() {
        train.fill_batch(chunk, &channels, &mut buf);
        let x = Tensor::from_vec(
            &[chunk.len(), train.window_len, channels.len()],
            std::mem::take(&mut buf),
        )?;
        let non_finite = || TrainError::NonFiniteLoss {
            epoch: epoch_index,
            batch: batch_index,
            snapshot: None,
        };
        let (probs, tape) = match network.forward_train(&x, rng.next_u64()) {
            Ok(v) => v,
            Err(TensorError::NonFinite(_)) => return Err(non_finite()),
            Err(e) => return Err(e.into()),
        };
        let (loss, grad) = match targets.loss(&probs, chunk) {
            Ok(v) => v,
            Err(TensorError::NonFinite(_)) => return Err(non_finite()),
            Err(e) => return Err(e.into()),
        };
        correct += probs
            .data()
            .chunks_exact(units)
            .zip(chunk)
            .filter(|(row, &i)| targets.is_correct(i, row))
            .count();
        let grads = match network.backward(&tape, &grad) {
            Ok(g) => g,
            Err(TensorError::NonFinite(_)) => return Err(non_finite()),
            Err(e) => return Err(e.into()),
        };
        if grads.iter().any(|g| g.ensure_finite("gradient").is_err()) {
            return Err(non_finite());
        }
        optimizer.step(&mut network.params_mut(), &grads)?;
        loss_sum += loss * chunk.len() as f64;
        steps += 1;
        buf = x.into_data();
    }
    let n = order.len().max(1) as f64;
    Ok(EpochStats {
        mean_loss: loss_sum / n,
        segment_accuracy: correct as f64 / n,
        steps,
    })
}

/// Runs the full training protocol for one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ModelConfig,
    pub config: TrainConfig,
    checkpoint_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(model: ModelConfig, config: TrainConfig) -> Self {
        Trainer {
            model,
            config,
            checkpoint_dir: None,
        }
    }

    /// Writes `best.ckpt` whenever validation accuracy improves and
    /// `round<N>.ckpt` at each round boundary.
    pub fn with_checkpoint_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    fn checkpoint(
        &self,
        network: &Network,
        set: &WindowSet,
        name: &str,
    ) -> Result<Option<PathBuf>, TrainError> {
        let Some(dir) = &self.checkpoint_dir else {
            return Ok(None);
        };
        fs::create_dir_all(dir).map_err(|source| TrainError::Io {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join(name);
        save_params(network, set.normalization.as_ref(), &path)?;
        Ok(Some(path))
    }

    pub fn run(
        &self,
        train: &WindowSet,
        val: &WindowSet,
    ) -> Result<(Network, TrainLog), TrainError> {
        self.config.validate()?;
        if train.is_empty() {
            return Err(TrainError::EmptySet("training"));
        }
        if val.is_empty() {
            return Err(TrainError::EmptySet("validation"));
        }
        check_disjoint(train, val).map_err(|e| match e {
            FoldError::SubjectLeakage(s) => TrainError::SubjectLeakage(s),
            other => TrainError::InvalidConfig(other.to_string()),
        })?;
        let task = self.model.task;
        let train_targets = Targets::for_windows(task, train)?;
        let val_targets = Targets::for_windows(task, val)?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut network = Network::new(self.model.clone(), rng.next_u64())?;
        let mut best = network.clone();
        let mut optimizer = Nadam::new(NadamConfig {
            learning_rate: self.config.initial_lr,
            ..NadamConfig::default()
        });
        let mut schedule = EarlyStopping::new(self.config);
        let mut log = TrainLog::default();
        let mut order: Vec<usize> = (0..train.len()).collect();

        for epoch_index in 1.. {
            let started = Instant::now();
            let round = schedule.round();
            let lr = schedule.lr();
            optimizer.set_learning_rate(lr);
            order.shuffle(&mut rng);
            let stats = match epoch(
                &mut network,
                &mut optimizer,
                train,
                &train_targets,
                &order,
                self.config.batch_size,
                &mut rng,
                epoch_index,
            ) {
                Err(TrainError::NonFiniteLoss { epoch, batch, .. }) => {
                    let snapshot = self.checkpoint(&best, train, "nonfinite_best.ckpt")?;
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch,
                        snapshot,
                    });
                }
                other => other?,
            };
            let val_acc = segment_accuracy(&network, val, &val_targets, self.config.batch_size)?;
            log.records.push(EpochRecord {
                epoch: epoch_index,
                round,
                lr,
                train_loss: stats.mean_loss,
                train_seg_acc: stats.segment_accuracy,
                val_seg_acc: val_acc,
                wallclock_s: started.elapsed().as_secs_f64(),
            });
            debug!(
                "epoch {epoch_index} round {round} lr {lr:e}: loss {:.5} train {:.4} val {:.4}",
                stats.mean_loss, stats.segment_accuracy, val_acc
            );

            let decision = schedule.observe(epoch_index, val_acc);
            if decision.improved {
                best.copy_params_from(&network);
                self.checkpoint(&best, train, "best.ckpt")?;
            }
            match decision.action {
                Action::Continue => {}
                Action::EndRound { restore_epoch } | Action::Finish { restore_epoch } => {
                    network.copy_params_from(&best);
                    log.round_ends.push((round, epoch_index, restore_epoch));
                    self.checkpoint(&network, train, &format!("round{round}.ckpt"))?;
                    info!(
                        "round {round} ended at epoch {epoch_index}; restored epoch {restore_epoch}"
                    );
                    if matches!(decision.action, Action::Finish { .. }) {
                        break;
                    }
                }
            }
        }
        let (best_val_acc, best_epoch) = schedule.best().unwrap_or((0.0, 0));
        log.best_epoch = best_epoch;
        log.best_val_acc = best_val_acc;
        Ok((network, log))
    }
}

/// Writes a training log as CSV.
pub fn write_log(log: &TrainLog, path: &Path) -> Result<(), TrainError> {
    fs::write(path, log.to_csv()).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(patience: usize, halvings: usize) -> TrainConfig {
        TrainConfig {
            patience,
            lr_halvings: halvings,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learning_rate_schedule() {
        let c = TrainConfig::default();
        let lrs: Vec<f64> = (0..=c.lr_halvings).map(|r| c.lr_for_round(r)).collect();
        assert_eq!(lrs, [1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5]);
    }

    #[test]
    fn ties_do_not_reset_patience() {
        let mut s = EarlyStopping::new(cfg(2, 0));
        assert!(s.observe(1, 0.5).improved);
        assert!(!s.observe(2, 0.5).improved);
        assert_eq!(
            s.observe(3, 0.5).action,
            Action::Finish { restore_epoch: 1 }
        );
    }

    #[test]
    fn round_cap_ends_round() {
        let mut s = EarlyStopping::new(TrainConfig {
            max_epochs_per_round: 3,
            ..cfg(10, 1)
        });
        s.observe(1, 0.1);
        s.observe(2, 0.2);
        let d = s.observe(3, 0.3);
        assert!(d.improved);
        assert_eq!(d.action, Action::EndRound { restore_epoch: 3 });
        assert_eq!(s.round(), 1);
        assert_eq!(s.lr(), 5e-4);
    }

    #[test]
    fn log_csv_has_one_row_per_epoch() {
        let log = TrainLog {
            records: vec![
                EpochRecord {
                    epoch: 1,
                    round: 0,
                    lr: 1e-3,
                    train_loss: 0.7,
                    train_seg_acc: 0.5,
                    val_seg_acc: 0.6,
                    wallclock_s: 1.0,
                };
                3
            ],
            ..TrainLog::default()
        };
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("epoch,round,lr,"));
    }
}
