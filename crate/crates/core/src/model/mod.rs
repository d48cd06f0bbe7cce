//! The multi-branch network: one independent 1D-convnet per input signal,
//! concatenated into a fully connected head.
//!
//! Per branch, on a length-100 window:
//!
//! | layer            | output shape |
//! |------------------|--------------|
//! | input            | 100 x 1      |
//! | conv 8, k3, SeLU | 98 x 8       |
//! | conv 16, k3, SeLU| 96 x 16      |
//! | max-pool 2       | 48 x 16      |
//! | conv 16, k3, SeLU| 46 x 16      |
//! | conv 16, k3, SeLU| 44 x 16      |
//! | max-pool 2       | 22 x 16      |
//! | flatten          | 352          |
//! | dense 100, SeLU, dropout | 100  |
//!
//! The head takes the `100 * channels` concatenation through dropout,
//! dense 100 (SeLU, dropout), dense 20 (SeLU, dropout) and a dense output:
//! one sigmoid unit for detection or five softmax units for severity.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    Activation, Cache, Conv1d, Dense, Dropout, Layer, LayerKind, MaxPool1d, Mode, Tensor,
    TensorError,
};
use crate::vgrf::{Group, SensorChannel, SeverityClass};

pub use checkpoint::{
    load_params, read_checkpoint, save_params, Checkpoint, CheckpointError, ManifestEntry,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

/// Width of each branch's feature vector.
pub const BRANCH_FEATURES: usize = 100;
const CONV_KERNEL: usize = 3;
const POOL: usize = 2;
const CONV_FILTERS: [usize; 4] = [8, 16, 16, 16];
const HEAD_UNITS: [usize; 2] = [100, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Detection,
    Severity,
}

impl Task {
    pub fn output_units(self) -> usize {
        match self {
            Task::Detection => 1,
            Task::Severity => SeverityClass::COUNT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Detection => "detection",
            Task::Severity => "severity",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "detection" => Ok(Task::Detection),
            "severity" => Ok(Task::Severity),
            other => Err(format!(
                "unknown task '{other}' (expected detection or severity)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutRates {
    /// After each branch's dense layer.
    pub branch_dense: f64,
    /// On the concatenated branch features.
    pub concat: f64,
    /// After the head's 100-unit layer.
    pub head_first: f64,
    /// After the head's 20-unit layer.
    pub head_second: f64,
}

impl Default for DropoutRates {
    fn default() -> Self {
        DropoutRates {
            branch_dense: 0.5,
            concat: 0.5,
            head_first: 0.5,
            head_second: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub task: Task,
    pub window_len: usize,
    /// Active input signals, one branch each, in branch order.
    pub channels: Vec<SensorChannel>,
    #[serde(default)]
    pub dropout: DropoutRates,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("at least one input channel is required")]
    NoChannels,
    #[error("channel {0} listed twice")]
    DuplicateChannel(SensorChannel),
    #[error("window length {0} is too short for the branch stack")]
    WindowTooShort(usize),
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
}

impl ModelConfig {
    pub fn new(task: Task) -> Self {
        ModelConfig {
            task,
            window_len: 100,
            channels: SensorChannel::ALL.to_vec(),
            dropout: DropoutRates::default(),
        }
    }

    /// The same configuration with both sensors of `channel`'s symmetric
    /// pair removed.
    pub fn without_pair(&self, channel: SensorChannel) -> Self {
        let pair = channel.pair();
        ModelConfig {
            channels: self
                .channels
                .iter()
                .copied()
                .filter(|c| *c != channel && *c != pair)
                .collect(),
            ..self.clone()
        }
    }

    pub fn channel_indices(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.index()).collect()
    }

    pub fn concat_width(&self) -> usize {
        BRANCH_FEATURES * self.channels.len()
    }

    /// Sequence lengths through the branch stack: input, after each conv
    /// and pool, ending at the length that gets flattened.
    pub fn branch_lengths(&self) -> Vec<usize> {
        let mut lengths = vec![self.window_len];
        let mut len = self.window_len;
        for _ in 0..2 {
            for _ in 0..2 {
                len = len.saturating_sub(CONV_KERNEL - 1);
                lengths.push(len);
            }
            len /= POOL;
            lengths.push(len);
        }
        lengths
    }

    pub fn flatten_width(&self) -> usize {
        self.branch_lengths().last().copied().unwrap_or(0) * CONV_FILTERS[3]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.channels.is_empty() {
            return Err(ConfigError::NoChannels);
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(c) {
                return Err(ConfigError::DuplicateChannel(*c));
            }
        }
        if self.branch_lengths().contains(&0) {
            return Err(ConfigError::WindowTooShort(self.window_len));
        }
        let d = self.dropout;
        for rate in [d.branch_dense, d.concat, d.head_first, d.head_second] {
            if !(0.0..1.0).contains(&rate) {
                return Err(ConfigError::DropoutRate(rate));
            }
        }
        Ok(())
    }
}

fn build_branch(config: &ModelConfig) -> Vec<Layer> {
    let selu = || Layer::Activation(Activation::Selu);
    let [f1, f2, f3, f4] = CONV_FILTERS;
    vec![
        Layer::Conv1d(Conv1d::new(CONV_KERNEL, 1, f1)),
        selu(),
        Layer::Conv1d(Conv1d::new(CONV_KERNEL, f1, f2)),
        selu(),
        Layer::MaxPool1d(MaxPool1d::new(POOL)),
        Layer::Conv1d(Conv1d::new(CONV_KERNEL, f2, f3)),
        selu(),
        Layer::Conv1d(Conv1d::new(CONV_KERNEL, f3, f4)),
        selu(),
        Layer::MaxPool1d(MaxPool1d::new(POOL)),
        Layer::Flatten,
        Layer::Dense(Dense::new(config.flatten_width(), BRANCH_FEATURES)),
        selu(),
        Layer::Dropout(Dropout::new(config.dropout.branch_dense)),
    ]
}

fn build_head(config: &ModelConfig) -> Vec<Layer> {
    let selu = || Layer::Activation(Activation::Selu);
    let [h1, h2] = HEAD_UNITS;
    let output = match config.task {
        Task::Detection => Activation::Sigmoid,
        Task::Severity => Activation::Softmax,
    };
    vec![
        Layer::Dropout(Dropout::new(config.dropout.concat)),
        Layer::Dense(Dense::new(config.concat_width(), h1)),
        selu(),
        Layer::Dropout(Dropout::new(config.dropout.head_first)),
        Layer::Dense(Dense::new(h1, h2)),
        selu(),
        Layer::Dropout(Dropout::new(config.dropout.head_second)),
        Layer::Dense(Dense::new(h2, config.task.output_units())),
        Layer::Activation(output),
    ]
}

/// Cached intermediates of one training forward pass.
#[derive(Debug)]
pub struct Tape {
    branches: Vec<Vec<Cache>>,
    head: Vec<Cache>,
    batch: usize,
}

/// Weights of every branch and the head. Branches never share weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: ModelConfig,
    branches: Vec<Vec<Layer>>,
    head: Vec<Layer>,
}

/// Seed for the dropout stream of branch `index` (the head uses
/// `index == branches`).
fn stream_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_forward(
    layers: &[Layer],
    x: Tensor,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Vec<Cache>), TensorError> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut x = x;
    for layer in layers {
        let (y, cache) = layer.forward(&x, mode, rng)?;
        caches.push(cache);
        x = y;
    }
    Ok((x, caches))
}

fn run_infer(layers: &[Layer], x: Tensor) -> Result<Tensor, TensorError> {
    layers.iter().try_fold(x, |x, layer| layer.infer(&x))
}

fn run_backward(
    layers: &[Layer],
    caches: &[Cache],
    grad: Tensor,
) -> Result<(Tensor, Vec<Tensor>), TensorError> {
    if caches.len() != layers.len() {
        return Err(TensorError::MissingForwardCache("network"));
    }
    let mut grads: Vec<Vec<Tensor>> = layers
        .iter()
        .map(|l| {
            l.params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect()
        })
        .collect();
    let mut g = grad;
    for ((layer, cache), lg) in layers.iter().zip(caches).zip(grads.iter_mut()).rev() {
        g = layer.backward(cache, &g, lg)?;
    }
    Ok((g, grads.into_iter().flatten().collect()))
}

impl Network {
    /// A network with LeCun-normal weights and zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        let mut net = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in net.branches.iter_mut().flatten().chain(net.head.iter_mut()) {
            layer.init(&mut rng);
        }
        Ok(net)
    }

    /// A network with every parameter zero, used as a loading template.
    pub fn zeroed(config: ModelConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let branches = (0..config.channels.len())
            .map(|_| build_branch(&config))
            .collect();
        let head = build_head(&config);
        Ok(Network {
            config,
            branches,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn branch_layers(&self, index: usize) -> &[Layer] {
        &self.branches[index]
    }

    pub fn head_layers(&self) -> &[Layer] {
        &self.head
    }

    /// All parameter tensors: branches in order, then the head.
    pub fn params(&self) -> Vec<&Tensor> {
        self.branches
            .iter()
            .flatten()
            .chain(&self.head)
            .flat_map(Layer::params)
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.branches
            .iter_mut()
            .flatten()
            .chain(self.head.iter_mut())
            .flat_map(Layer::params_mut)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Copies parameter values from a network of identical architecture.
    pub fn copy_params_from(&mut self, other: &Network) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.data_mut().copy_from_slice(src.data());
        }
    }

    /// Layer kinds and parameter shapes, branch by branch, with a
    /// `Concatenate` marker before the head.
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let entry = |layer: &Layer| ManifestEntry {
            kind: layer.kind(),
            detail: match layer {
                Layer::Activation(a) => *a as u32,
                Layer::MaxPool1d(p) => p.pool as u32,
                _ => 0,
            },
            shapes: layer.params().iter().map(|p| p.shape().to_vec()).collect(),
        };
        let mut out: Vec<ManifestEntry> = self.branches.iter().flatten().map(entry).collect();
        out.push(ManifestEntry {
            kind: LayerKind::Concatenate,
            detail: self.branches.len() as u32,
            shapes: Vec::new(),
        });
        out.extend(self.head.iter().map(entry));
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, TensorError> {
        x.expect_rank(3, "network input")?;
        let batch = x.shape()[0];
        x.expect_shape(
            &[batch, self.config.window_len, self.branches.len()],
            "network input",
        )?;
        Ok(batch)
    }

    fn branch_input(&self, x: &Tensor, channel: usize) -> Tensor {
        let c = self.branches.len();
        let data = x.data().iter().skip(channel).step_by(c).copied().collect();
        let batch = x.shape()[0];
        Tensor::from_vec(&[batch, self.config.window_len, 1], data).expect("strided channel slice")
    }

    fn concat(&self, outputs: &[Tensor], batch: usize) -> Tensor {
        let width = self.config.concat_width();
        let mut data = vec![0.0; batch * width];
        for (i, out) in outputs.iter().enumerate() {
            for (b, row) in out.data().chunks_exact(BRANCH_FEATURES).enumerate() {
                let start = b * width + i * BRANCH_FEATURES;
                data[start..start + BRANCH_FEATURES].copy_from_slice(row);
            }
        }
        Tensor::from_vec(&[batch, width], data).expect("concatenated width")
    }

    /// Eval-mode outputs of every branch, before concatenation.
    pub fn branch_outputs(&self, x: &Tensor) -> Result<Vec<Tensor>, TensorError> {
        self.check_input(x)?;
        self.branches
            .par_iter()
            .enumerate()
            .map(|(i, layers)| run_infer(layers, self.branch_input(x, i)))
            .collect()
    }

    /// Inference on a `[batch, window_len, channels]` tensor: `[batch, 1]`
    /// probabilities for detection, `[batch, 5]` distributions for severity.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let batch = self.check_input(x)?;
        let outputs = self.branch_outputs(x)?;
        let out = run_infer(&self.head, self.concat(&outputs, batch))?;
        out.ensure_finite("network output")?;
        Ok(out)
    }

    /// Forward pass in either mode. Dropout masks derive from `seed`.
    pub fn forward(&self, x: &Tensor, mode: Mode, seed: u64) -> Result<Tensor, TensorError> {
        match mode {
            Mode::Eval => self.predict(x),
            Mode::Train => Ok(self.forward_train(x, seed)?.0),
        }
    }

    /// Training forward pass keeping the intermediates for
    /// [`Network::backward`].
    pub fn forward_train(&self, x: &Tensor, seed: u64) -> Result<(Tensor, Tape), TensorError> {
        let batch = self.check_input(x)?;
        let results: Vec<(Tensor, Vec<Cache>)> = self
            .branches
            .par_iter()
            .enumerate()
            .map(|(i, layers)| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, i));
                run_forward(layers, self.branch_input(x, i), Mode::Train, &mut rng)
            })
            .collect::<Result<_, _>>()?;
        let (outputs, branch_caches): (Vec<Tensor>, Vec<Vec<Cache>>) = results.into_iter().unzip();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, self.branches.len()));
        let (out, head_caches) = run_forward(
            &self.head,
            self.concat(&outputs, batch),
            Mode::Train,
            &mut rng,
        )?;
        out.ensure_finite("network output")?;
        Ok((
            out,
            Tape {
                branches: branch_caches,
                head: head_caches,
                batch,
            },
        ))
    }

    /// Gradients of every parameter, in [`Network::params`] order, given the
    /// gradient of the loss with respect to the network output.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<Vec<Tensor>, TensorError> {
        if tape.branches.len() != self.branches.len() {
            return Err(TensorError::MissingForwardCache("network"));
        }
        let (g_concat, head_grads) = run_backward(&self.head, &tape.head, grad_out.clone())?;
        let width = self.config.concat_width();
        let branch_grads: Vec<Vec<Tensor>> = self
            .branches
            .par_iter()
            .zip(tape.branches.par_iter())
            .enumerate()
            .map(|(i, (layers, caches))| {
                let data = g_concat
                    .data()
                    .chunks_exact(width)
                    .flat_map(|row| &row[i * BRANCH_FEATURES..(i + 1) * BRANCH_FEATURES])
                    .copied()
                    .collect();
                let g = Tensor::from_vec(&[tape.batch, BRANCH_FEATURES], data)?;
                Ok(run_backward(layers, caches, g)?.1)
            })
            .collect::<Result<_, TensorError>>()?;
        let grads: Vec<Tensor> = branch_grads
            .into_iter()
            .flatten()
            .chain(head_grads)
            .collect();
        for g in &grads {
            g.ensure_finite("parameter gradient")?;
        }
        Ok(grads)
    }
}

/// Detection decision for one window: Parkinson iff `p > 0.5`.
pub fn classify_detection(probability: f64) -> Group {
    if probability > 0.5 {
        Group::Parkinson
    } else {
        Group::Control
    }
}

/// Severity decision for one window: the most probable class, ties going
/// to the more severe class.
pub fn classify_severity(probs: &[f64]) -> SeverityClass {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p >= probs[best] {
            best = i;
        }
    }
    SeverityClass::from_index(best).expect("five-class distribution")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_input(batch: usize, config: &ModelConfig, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = batch * config.window_len * config.channels.len();
        Tensor::from_vec(
            &[batch, config.window_len, config.channels.len()],
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn shape_table() {
        let config = ModelConfig::new(Task::Detection);
        assert_eq!(config.branch_lengths(), [100, 98, 96, 48, 46, 44, 22]);
        assert_eq!(config.flatten_width(), 352);
        assert_eq!(config.concat_width(), 1800);
        let ablated = config.without_pair(SensorChannel::RTotal);
        assert_eq!(ablated.channels.len(), 16);
        assert_eq!(ablated.concat_width(), 1600);
        assert!(!ablated.channels.iter().any(|c| c.is_total()));
    }

    #[test]
    fn parameter_counts() {
        // Per branch: 32 + 400 + 784 + 784 + 35300 = 37300.
        let det = Network::zeroed(ModelConfig::new(Task::Detection)).unwrap();
        assert_eq!(det.param_count(), 853_541);
        let sev = Network::zeroed(ModelConfig::new(Task::Severity)).unwrap();
        assert_eq!(sev.param_count(), 853_625);
    }

    #[test]
    fn config_validation() {
        let mut config = ModelConfig::new(Task::Detection);
        config.channels.clear();
        assert_eq!(config.validate(), Err(ConfigError::NoChannels));
        let mut config = ModelConfig::new(Task::Detection);
        config.window_len = 12;
        assert!(matches!(
            config.validate(),
            Err(ConfigError::WindowTooShort(12))
        ));
        let mut config = ModelConfig::new(Task::Detection);
        config.dropout.concat = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn output_contracts() {
        let det_cfg = ModelConfig {
            channels: SensorChannel::ALL[..3].to_vec(),
            ..ModelConfig::new(Task::Detection)
        };
        let det = Network::new(det_cfg.clone(), 1).unwrap();
        let x = random_input(4, &det_cfg, 2);
        let p = det.predict(&x).unwrap();
        assert_eq!(p.shape(), &[4, 1]);
        assert!(p.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        assert_eq!(det.predict(&x).unwrap(), p);

        let sev_cfg = ModelConfig {
            task: Task::Severity,
            ..det_cfg
        };
        let sev = Network::new(sev_cfg, 1).unwrap();
        let p = sev.predict(&x).unwrap();
        for row in p.data().chunks_exact(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(sev.predict(&Tensor::zeros(&[1, 100, 4])).is_err());
    }

    #[test]
    fn branches_are_independent() {
        let config = ModelConfig {
            channels: SensorChannel::ALL[..4].to_vec(),
            ..ModelConfig::new(Task::Detection)
        };
        let net = Network::new(config.clone(), 3).unwrap();
        let x = random_input(2, &config, 4);
        let before = net.branch_outputs(&x).unwrap();
        let mut perturbed = x.clone();
        for b in 0..2 {
            for t in 0..100 {
                perturbed.data_mut()[(b * 100 + t) * 4 + 2] += 0.75;
            }
        }
        let after = net.branch_outputs(&perturbed).unwrap();
        for i in 0..4 {
            if i == 2 {
                assert_ne!(before[i], after[i]);
            } else {
                assert_eq!(before[i], after[i]);
            }
        }
    }

    #[test]
    fn branch_weights_are_not_shared() {
        let net = Network::new(ModelConfig::new(Task::Detection), 0).unwrap();
        assert_ne!(net.branch_layers(0), net.branch_layers(1));
    }

    #[test]
    fn window_classification() {
        assert_eq!(classify_detection(0.51), Group::Parkinson);
        assert_eq!(classify_detection(0.5), Group::Control);
        assert_eq!(classify_severity(&[0.1, 0.2, 0.2, 0.2, 0.3]).level(), 5);
        assert_eq!(classify_severity(&[0.3, 0.3, 0.2, 0.1, 0.1]).level(), 2);
        assert_eq!(classify_severity(&[0.2; 5]).level(), 5);
    }

    #[test]
    fn train_forward_is_seeded() {
        let config = ModelConfig {
            channels: SensorChannel::ALL[..2].to_vec(),
            ..ModelConfig::new(Task::Detection)
        };
        let net = Network::new(config.clone(), 5).unwrap();
        let x = random_input(3, &config, 6);
        let a = net.forward(&x, Mode::Train, 42).unwrap();
        let b = net.forward(&x, Mode::Train, 42).unwrap();
        let c = net.forward(&x, Mode::Train, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
