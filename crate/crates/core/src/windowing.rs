//! Window segmentation and subject-level cross-validation folds.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vgrf::{Dataset, Group, SeverityClass, Walk, NUM_CHANNELS};

pub const DEFAULT_WINDOW_LEN: usize = 100;
pub const DEFAULT_STRIDE: usize = 50;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FoldError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("{group} group has {count} subjects, fewer than {k} folds")]
    TooFewSubjects {
        group: Group,
        count: usize,
        k: usize,
    },
    #[error("fold index {index} out of range for {k} folds")]
    FoldIndex { index: usize, k: usize },
    #[error("window length {window_len} and stride {stride} are invalid")]
    InvalidWindow { window_len: usize, stride: usize },
    #[error("fold manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("subject {0} is in both the training and validation split")]
    SubjectLeakage(String),
}

/// A fixed-length slice of one walk. Samples are borrowed from the walk.
#[derive(Debug, Clone)]
pub struct Window {
    walk: Arc<Walk>,
    start_index: usize,
    window_len: usize,
}

impl Window {
    pub fn walk(&self) -> &Arc<Walk> {
        &self.walk
    }

    pub fn walk_id(&self) -> &str {
        &self.walk.walk_id
    }

    pub fn subject_id(&self) -> &str {
        &self.walk.subject_id
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn len(&self) -> usize {
        self.window_len
    }

    pub fn is_empty(&self) -> bool {
        self.window_len == 0
    }

    /// Row-major `window_len x 18` raw forces.
    pub fn values(&self) -> &[f64] {
        let start = self.start_index * NUM_CHANNELS;
        &self.walk.samples()[start..start + self.window_len * NUM_CHANNELS]
    }

    pub fn detection_label(&self) -> Group {
        self.walk.group
    }

    pub fn severity_label(&self) -> Option<SeverityClass> {
        self.walk.severity()
    }
}

/// Number of windows `segment_walk` yields for a walk of `timesteps` samples.
pub fn window_count(timesteps: usize, window_len: usize, stride: usize) -> usize {
    if timesteps < window_len || window_len == 0 || stride == 0 {
        0
    } else {
        (timesteps - window_len) / stride + 1
    }
}

/// Slices a walk into full windows of `window_len` samples every `stride`
/// samples, ordered by start index. Trailing samples that do not fill a
/// window are dropped.
pub fn segment_walk(walk: &Arc<Walk>, window_len: usize, stride: usize) -> Vec<Window> {
    assert!(window_len >= 1, "window_len must be positive");
    assert!(
        (1..=window_len).contains(&stride),
        "stride must be in 1..=window_len"
    );
    (0..window_count(walk.num_timesteps(), window_len, stride))
        .map(|i| Window {
            walk: Arc::clone(walk),
            start_index: i * stride,
            window_len,
        })
        .collect()
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Population mean and standard deviation of each channel over every
    /// sample of every window (overlapping samples count once per window).
    /// Constant channels get a unit deviation.
    pub fn fit(windows: &[Window]) -> Self {
        let mut count = 0usize;
        let mut sum = [0.0; NUM_CHANNELS];
        for w in windows {
            for row in w.values().chunks_exact(NUM_CHANNELS) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
            count += w.len();
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut sq = [0.0; NUM_CHANNELS];
        for w in windows {
            for row in w.values().chunks_exact(NUM_CHANNELS) {
                for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Normalization { mean, std }
    }

    pub fn apply(&self, channel: usize, value: f64) -> f64 {
        (value - self.mean[channel]) / self.std[channel]
    }
}

/// Windows for one side of a fold, plus the normalization applied to them.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub window_len: usize,
    pub stride: usize,
    pub normalization: Option<Normalization>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn subject_ids(&self) -> BTreeSet<&str> {
        self.windows.iter().map(Window::subject_id).collect()
    }

    pub fn walk_ids(&self) -> BTreeSet<&str> {
        self.windows.iter().map(Window::walk_id).collect()
    }

    /// Keeps only windows matching `keep`.
    pub fn retain(&mut self, keep: impl FnMut(&Window) -> bool) {
        self.windows.retain(keep);
    }

    /// Writes the selected windows into `out` as a `[batch, window_len,
    /// channels.len()]` tensor buffer, normalized if this set carries
    /// statistics. `channels` are canonical channel indices.
    pub fn fill_batch(&self, indices: &[usize], channels: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(indices.len() * self.window_len * channels.len());
        for &i in indices {
            for row in self.windows[i].values().chunks_exact(NUM_CHANNELS) {
                for &c in channels {
                    let v = row[c];
                    out.push(match &self.normalization {
                        Some(n) => n.apply(c, v),
                        None => v,
                    });
                }
            }
        }
    }
}

/// Assignment of subjects to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<BTreeSet<String>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, subject_id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(subject_id))
    }

    /// Text manifest: `# seed=<seed> k=<k>` then `fold_index<TAB>subject_id`
    /// per line.
    pub fn to_manifest(&self) -> String {
        let mut out = format!("# seed={} k={}\n", self.seed, self.k());
        for (i, fold) in self.folds.iter().enumerate() {
            for subject in fold {
                let _ = writeln!(out, "{i}\t{subject}");
            }
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self, FoldError> {
        let bad = |line: usize, reason: &str| FoldError::Manifest {
            line,
            reason: reason.to_string(),
        };
        let mut seed = None;
        let mut k = None;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if let Some(header) = line.strip_prefix('#') {
                for token in header.split_whitespace() {
                    if let Some(v) = token.strip_prefix("seed=") {
                        seed = Some(v.parse().map_err(|_| bad(line_no, "bad seed"))?);
                    } else if let Some(v) = token.strip_prefix("k=") {
                        k = Some(v.parse().map_err(|_| bad(line_no, "bad k"))?);
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(fold), Some(subject), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(line_no, "expected '<fold_index> <subject_id>'"));
            };
            let fold: usize = fold.parse().map_err(|_| bad(line_no, "bad fold index"))?;
            entries.push((line_no, fold, subject.to_string()));
        }
        let k = k
            .or_else(|| entries.iter().map(|e| e.1 + 1).max())
            .ok_or_else(|| bad(1, "empty fold manifest"))?;
        if k < 2 {
            return Err(FoldError::InvalidK(k));
        }
        let mut folds = vec![BTreeSet::new(); k];
        let mut seen = BTreeSet::new();
        for (line_no, fold, subject) in entries {
            if fold >= k {
                return Err(bad(line_no, "fold index out of range"));
            }
            if !seen.insert(subject.clone()) {
                return Err(bad(line_no, "subject listed twice"));
            }
            folds[fold].insert(subject);
        }
        Ok(FoldPlan {
            seed: seed.unwrap_or(0),
            folds,
        })
    }
}

/// Splits each group's subjects into `k` folds whose sizes differ by at most
/// one, after a seeded shuffle. The larger folds of the second group start
/// where the first group's ended, which keeps fold totals even.
pub fn build_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    if k < 2 {
        return Err(FoldError::InvalidK(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![BTreeSet::new(); k];
    let mut offset = 0;
    for group in [Group::Parkinson, Group::Control] {
        let mut ids: Vec<&str> = dataset
            .subjects_in(group)
            .map(|s| s.subject_id.as_str())
            .collect();
        if ids.len() < k {
            return Err(FoldError::TooFewSubjects {
                group,
                count: ids.len(),
                k,
            });
        }
        ids.shuffle(&mut rng);
        let base = ids.len() / k;
        let extra = ids.len() % k;
        let mut sizes = vec![base; k];
        for i in 0..extra {
            sizes[(offset + i) % k] += 1;
        }
        offset = (offset + extra) % k;
        let mut rest = ids.as_slice();
        for (fold, size) in folds.iter_mut().zip(sizes) {
            let (take, tail) = rest.split_at(size);
            fold.extend(take.iter().map(|s| s.to_string()));
            rest = tail;
        }
    }
    Ok(FoldPlan { seed, folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowParams {
    pub window_len: usize,
    pub stride: usize,
    pub normalize: bool,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_STRIDE,
            normalize: false,
        }
    }
}

/// Windows the walks of fold `fold_index` as the validation set and every
/// other walk as the training set. Segmentation happens per walk, so no
/// window mixes subjects; normalization statistics come from the training
/// windows only.
pub fn materialize_fold(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold_index: usize,
    params: &WindowParams,
) -> Result<(WindowSet, WindowSet), FoldError> {
    if fold_index >= plan.k() {
        return Err(FoldError::FoldIndex {
            index: fold_index,
            k: plan.k(),
        });
    }
    if params.window_len == 0 || params.stride == 0 || params.stride > params.window_len {
        return Err(FoldError::InvalidWindow {
            window_len: params.window_len,
            stride: params.stride,
        });
    }
    let fold_of: HashMap<&str, usize> = plan
        .folds
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.iter().map(move |s| (s.as_str(), i)))
        .collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for walk in dataset.walks() {
        let windows = segment_walk(walk, params.window_len, params.stride);
        match fold_of.get(walk.subject_id.as_str()) {
            Some(&i) if i == fold_index => val.extend(windows),
            Some(_) => train.extend(windows),
            None => {
                log::warn!("subject {} is not in the fold plan", walk.subject_id);
            }
        }
    }
    let normalization = params.normalize.then(|| Normalization::fit(&train));
    let make = |windows| WindowSet {
        windows,
        window_len: params.window_len,
        stride: params.stride,
        normalization: normalization.clone(),
    };
    let (train, val) = (make(train), make(val));
    check_disjoint(&train, &val)?;
    Ok((train, val))
}

/// Errors if any subject has windows on both sides.
pub fn check_disjoint(train: &WindowSet, val: &WindowSet) -> Result<(), FoldError> {
    let train_ids = train.subject_ids();
    match val
        .subject_ids()
        .into_iter()
        .find(|s| train_ids.contains(s))
    {
        Some(s) => Err(FoldError::SubjectLeakage(s.to_string())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vgrf::SubjectInfo;
    use proptest::prelude::*;

    fn walk(id: &str, subject: &str, group: Group, timesteps: usize) -> Walk {
        let samples = (0..timesteps * NUM_CHANNELS)
            .map(|i| (i % 97) as f64 + if group == Group::Parkinson { 3.0 } else { 0.0 })
            .collect();
        let info = SubjectInfo {
            group,
            updrs_total: Some(if group == Group::Parkinson { 20 } else { 0 }),
        };
        Walk::new(id, subject, info, samples).unwrap()
    }

    fn dataset(pd: usize, co: usize, timesteps: usize) -> Dataset {
        let mut walks = Vec::new();
        for i in 0..pd {
            walks.push(walk(
                &format!("P{i:03}_01"),
                &format!("P{i:03}"),
                Group::Parkinson,
                timesteps,
            ));
        }
        for i in 0..co {
            walks.push(walk(
                &format!("C{i:03}_01"),
                &format!("C{i:03}"),
                Group::Control,
                timesteps,
            ));
        }
        Dataset::from_walks(walks).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(12000, 100, 50), 239);
        let w = Arc::new(walk("a_1", "a", Group::Control, 100));
        let windows = segment_walk(&w, 100, 50);
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].start_index(), 0);
        let short = Arc::new(walk("b_1", "b", Group::Control, 99));
        assert!(segment_walk(&short, 100, 50).is_empty());
    }

    #[test]
    fn window_values_and_labels() {
        let w = Arc::new(walk("a_1", "a", Group::Parkinson, 250));
        let windows = segment_walk(&w, 100, 50);
        assert_eq!(windows.len(), 4);
        let second = &windows[1];
        assert_eq!(
            second.values(),
            &w.samples()[50 * NUM_CHANNELS..150 * NUM_CHANNELS]
        );
        assert_eq!(second.detection_label(), Group::Parkinson);
        assert_eq!(second.severity_label().unwrap().level(), 3);
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(t in 0usize..600, len in 1usize..120, stride_frac in 0.0f64..1.0) {
            let stride = 1 + ((len - 1) as f64 * stride_frac) as usize;
            let brute = (0..t).filter(|s| s + len <= t && s % stride == 0).count();
            prop_assert_eq!(window_count(t, len, stride), brute);
            let w = Arc::new(walk("x_1", "x", Group::Control, t));
            let starts: Vec<usize> = segment_walk(&w, len, stride).iter().map(|w| w.start_index()).collect();
            let expected: Vec<usize> = (0..t).filter(|s| s + len <= t && s % stride == 0).collect();
            prop_assert_eq!(starts, expected);
        }
    }

    #[test]
    fn full_cohort_fold_sizes() {
        let data = dataset(93, 73, 100);
        let plan = build_folds(&data, 10, 7).unwrap();
        let sizes = |group| {
            let mut s: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| {
                    f.iter()
                        .filter(|id| data.subject(id).unwrap().group == group)
                        .count()
                })
                .collect();
            s.sort_unstable();
            s
        };
        assert_eq!(sizes(Group::Parkinson), [9, 9, 9, 9, 9, 9, 9, 10, 10, 10]);
        assert_eq!(sizes(Group::Control), [7, 7, 7, 7, 7, 7, 7, 8, 8, 8]);
        let totals: Vec<usize> = plan.folds.iter().map(BTreeSet::len).collect();
        assert!(totals.iter().max().unwrap() - totals.iter().min().unwrap() <= 1);
        assert_eq!(build_folds(&data, 10, 7).unwrap(), plan);
        assert_ne!(build_folds(&data, 10, 8).unwrap(), plan);
    }

    #[test]
    fn too_few_subjects() {
        let data = dataset(12, 5, 100);
        assert_eq!(
            build_folds(&data, 10, 0),
            Err(FoldError::TooFewSubjects {
                group: Group::Control,
                count: 5,
                k: 10
            })
        );
        assert_eq!(build_folds(&data, 1, 0), Err(FoldError::InvalidK(1)));
    }

    #[test]
    fn manifest_round_trip() {
        let data = dataset(20, 20, 100);
        let plan = build_folds(&data, 4, 99).unwrap();
        let text = plan.to_manifest();
        assert_eq!(FoldPlan::from_manifest(&text).unwrap(), plan);
        assert!(FoldPlan::from_manifest("0\tA\n1\tA\n").is_err());
    }

    #[test]
    fn fold_materialization_is_disjoint() {
        let data = dataset(10, 10, 320);
        let plan = build_folds(&data, 5, 3).unwrap();
        let mut val_total = 0;
        for i in 0..5 {
            let (train, val) = materialize_fold(&data, &plan, i, &WindowParams::default()).unwrap();
            assert!(train.subject_ids().is_disjoint(&val.subject_ids()));
            assert_eq!(train.len() + val.len(), 20 * window_count(320, 100, 50));
            val_total += val.len();
        }
        assert_eq!(val_total, 20 * 5);
        assert!(materialize_fold(&data, &plan, 5, &WindowParams::default()).is_err());
    }

    #[test]
    fn normalization_uses_train_statistics() {
        let data = dataset(10, 10, 260);
        let plan = build_folds(&data, 5, 3).unwrap();
        let params = WindowParams {
            normalize: true,
            ..WindowParams::default()
        };
        let (train, _) = materialize_fold(&data, &plan, 0, &params).unwrap();
        let channels: Vec<usize> = (0..NUM_CHANNELS).collect();
        let indices: Vec<usize> = (0..train.len()).collect();
        let mut buf = Vec::new();
        train.fill_batch(&indices, &channels, &mut buf);
        let n = (buf.len() / NUM_CHANNELS) as f64;
        for c in 0..NUM_CHANNELS {
            let vals = buf.iter().skip(c).step_by(NUM_CHANNELS);
            let mean: f64 = vals.clone().sum::<f64>() / n;
            let var: f64 = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "channel {c} mean {mean}");
            assert!(
                (var.sqrt() - 1.0).abs() < 1e-6,
                "channel {c} std {}",
                var.sqrt()
            );
        }
    }
}
