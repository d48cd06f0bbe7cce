//! Parkinson's disease detection and UPDRS severity prediction from gait.
//!
//! The pipeline reads per-foot vertical ground reaction force (VGRF)
//! recordings, slices them into overlapping windows, and classifies every
//! window with a network of 18 independent 1D convolutional branches (one per
//! sensor signal) feeding a shared fully connected head. Window decisions are
//! pooled into one decision per walk by majority vote (detection) or mode
//! (severity), and everything is evaluated with subject-level stratified
//! k-fold cross-validation.
//!
//! Module map:
//!
//! - [`vgrf`]: gaitpdb-format walk files, demographics, dataset loading.
//! - [`windowing`]: window segmentation, stratified subject-level folds.
//! - [`autodiff`]: the small tensor/layer/optimizer engine with analytic gradients.
//! - [`model`]: the multi-branch network, checkpoints.
//! - [`training`]: Nadam training with early stopping and learning-rate halving.
//! - [`evaluation`]: metrics, vote aggregation, cross-validation, ablation.
//! - [`cli`]: the `gaitnet` command-line entry point.

pub mod autodiff;
pub mod cli;
pub mod evaluation;
pub mod model;
pub mod training;
pub mod vgrf;
pub mod windowing;

pub use autodiff::{Mode, Tensor, TensorError};
pub use evaluation::{
    aggregate_detection, aggregate_severity, detection_metrics, multiclass_metrics,
    BinaryConfusion, CvReport, DetectionMetrics, MulticlassConfusion, MulticlassMetrics,
};
pub use model::{ModelConfig, Network, Task};
pub use training::{TrainConfig, TrainLog, Trainer};
pub use vgrf::{
    load_dataset, map_updrs_to_class, parse_walk_file, DataError, Dataset, Group, SensorChannel,
    SeverityClass, Walk,
};
pub use windowing::{build_folds, materialize_fold, segment_walk, FoldPlan, Window, WindowSet};

/// Version string recorded in run manifests and checkpoints.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
