use std::path::Path;

use serde::Serialize;

use super::{aggregate_detection, aggregate_severity, EvalError};
use crate::autodiff::{Tensor, TensorError};
use crate::model::{
    classify_detection, classify_severity, read_checkpoint, CheckpointError, Network, Task,
};
use crate::vgrf::{Group, SeverityClass, NUM_CHANNELS};
use crate::windowing::{window_count, Normalization, DEFAULT_STRIDE};

const PREDICT_BATCH: usize = 256;

/// A trained network together with the input normalization it expects.
#[derive(Debug, Clone)]
pub struct Predictor {
    network: Network,
    normalization: Option<Normalization>,
}

/// Voted decision for one walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkDecision {
    pub task: Task,
    /// 0/1 (Control/Parkinson) for detection, class index for severity.
    pub label: usize,
    /// Window votes per label.
    pub votes: Vec<usize>,
}

impl WalkDecision {
    pub fn windows(&self) -> usize {
        self.votes.iter().sum()
    }

    /// Share of windows that voted for `label`.
    pub fn fraction(&self, label: usize) -> f64 {
        self.votes[label] as f64 / self.windows() as f64
    }

    pub fn label_name(&self) -> String {
        match self.task {
            Task::Detection => {
                let group = if self.label == 1 {
                    Group::Parkinson
                } else {
                    Group::Control
                };
                group.name().to_string()
            }
            Task::Severity => {
                let class = SeverityClass::from_index(self.label).expect("class index");
                format!("severity class {}", class.level())
            }
        }
    }

    /// `Parkinson (100%)`, `severity class 3 (62%)`.
    pub fn summary(&self) -> String {
        format!(
            "{} ({:.0}%)",
            self.label_name(),
            100.0 * self.fraction(self.label)
        )
    }
}

impl Predictor {
    pub fn new(network: Network, normalization: Option<Normalization>) -> Self {
        Predictor {
            network,
            normalization,
        }
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self, CheckpointError> {
        let ckpt = read_checkpoint(path)?;
        Ok(Predictor::new(ckpt.network, ckpt.normalization))
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn task(&self) -> Task {
        self.network.task()
    }

    pub fn window_len(&self) -> usize {
        self.network.config().window_len
    }

    /// Network outputs for `count` windows given as raw `[count, window_len,
    /// 18]` rows in canonical channel order. Row-major `[count, units]`.
    pub fn predict_windows(&self, windows: &[f64], count: usize) -> Result<Vec<f64>, TensorError> {
        let len = self.window_len();
        let per_window = len * NUM_CHANNELS;
        if windows.len() != count * per_window {
            return Err(TensorError::ShapeMismatch {
                context: "predict_windows",
                expected: vec![count, len, NUM_CHANNELS],
                found: vec![windows.len()],
            });
        }
        let channels = self.network.config().channel_indices();
        let mut out = Vec::with_capacity(count * self.task().output_units());
        for chunk in windows.chunks(PREDICT_BATCH * per_window) {
            let batch = chunk.len() / per_window;
            let mut buf = Vec::with_capacity(batch * len * channels.len());
            for row in chunk.chunks_exact(NUM_CHANNELS) {
                for &c in &channels {
                    buf.push(match &self.normalization {
                        Some(n) => n.apply(c, row[c]),
                        None => row[c],
                    });
                }
            }
            let x = Tensor::from_vec(&[batch, len, channels.len()], buf)?;
            out.extend_from_slice(self.network.predict(&x)?.data());
        }
        Ok(out)
    }

    /// Classifies a walk given as `T x 18` row-major samples by voting over
    /// its full windows.
    pub fn classify_walk(&self, samples: &[f64], stride: usize) -> Result<WalkDecision, EvalError> {
        let len = self.window_len();
        if !samples.len().is_multiple_of(NUM_CHANNELS) {
            return Err(EvalError::Invalid(format!(
                "sample buffer length {} is not a multiple of {NUM_CHANNELS}",
                samples.len()
            )));
        }
        let timesteps = samples.len() / NUM_CHANNELS;
        let count = window_count(timesteps, len, stride.max(1));
        if count == 0 {
            return Err(EvalError::NoFullWindows(len));
        }
        let mut windows = Vec::with_capacity(count * len * NUM_CHANNELS);
        for w in 0..count {
            let start = w * stride.max(1) * NUM_CHANNELS;
            windows.extend_from_slice(&samples[start..start + len * NUM_CHANNELS]);
        }
        let probs = self.predict_windows(&windows, count)?;
        let task = self.task();
        let (label, votes) = match task {
            Task::Detection => {
                let groups: Vec<Group> = probs.iter().map(|p| classify_detection(*p)).collect();
                let mut votes = vec![0; 2];
                for g in &groups {
                    votes[usize::from(g.label())] += 1;
                }
                (usize::from(aggregate_detection(&groups)?.label()), votes)
            }
            Task::Severity => {
                let classes: Vec<SeverityClass> = probs
                    .chunks_exact(SeverityClass::COUNT)
                    .map(classify_severity)
                    .collect();
                let mut votes = vec![0; SeverityClass::COUNT];
                for c in &classes {
                    votes[c.index()] += 1;
                }
                (aggregate_severity(&classes)?.index(), votes)
            }
        };
        Ok(WalkDecision { task, label, votes })
    }

    pub fn classify_walk_default(&self, samples: &[f64]) -> Result<WalkDecision, EvalError> {
        self.classify_walk(samples, DEFAULT_STRIDE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::vgrf::SensorChannel;

    fn predictor(task: Task) -> Predictor {
        let config = ModelConfig {
            channels: vec![SensorChannel::L2, SensorChannel::RTotal],
            ..ModelConfig::new(task)
        };
        Predictor::new(Network::new(config, 4).unwrap(), None)
    }

    #[test]
    fn short_walk_has_no_windows() {
        let p = predictor(Task::Detection);
        let samples = vec![1.0; 99 * NUM_CHANNELS];
        assert!(matches!(
            p.classify_walk(&samples, 50),
            Err(EvalError::NoFullWindows(100))
        ));
    }

    #[test]
    fn votes_cover_every_window() {
        for task in [Task::Detection, Task::Severity] {
            let p = predictor(task);
            let samples: Vec<f64> = (0..400 * NUM_CHANNELS).map(|i| (i % 37) as f64).collect();
            let d = p.classify_walk(&samples, 50).unwrap();
            assert_eq!(d.windows(), 7);
            assert_eq!(d.votes.len(), task.output_units().max(2));
            assert!(d.fraction(d.label) >= 0.5 || task == Task::Severity);
        }
    }

    #[test]
    fn window_predictions_match_network() {
        let p = predictor(Task::Severity);
        let samples: Vec<f64> = (0..100 * NUM_CHANNELS)
            .map(|i| (i % 11) as f64 * 0.1)
            .collect();
        let probs = p.predict_windows(&samples, 1).unwrap();
        let direct: Vec<f64> = (0..100)
            .flat_map(|t| {
                let row = &samples[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS];
                [
                    row[SensorChannel::L2.index()],
                    row[SensorChannel::RTotal.index()],
                ]
            })
            .collect();
        let x = Tensor::from_vec(&[1, 100, 2], direct).unwrap();
        assert_eq!(probs, p.network().predict(&x).unwrap().data());
    }
}
