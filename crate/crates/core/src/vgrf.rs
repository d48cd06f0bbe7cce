//! Gait database ingestion.
//!
//! Walk files follow the PhysioNet gaitpdb layout: whitespace-separated text,
//! one row per 10 ms sample, 19 columns `time L1..L8 R1..R8 LTotal RTotal`.
//! Files are named `<subject>_<trial>.txt` (e.g. `GaPt03_02.txt`), so every
//! trial of a subject, dual-task trials included, shares one subject id.
//!
//! The demographics manifest is delimited text (tab, comma or whitespace) with
//! a header row. Columns are located by name: `subject_id`/`ID`,
//! `group`/`Group` (`PD`/`Parkinson`, `CO`/`Control`) and
//! `updrs_total`/`UPDRS` (blank or `NaN` when absent). Other columns are
//! ignored, which lets the stock `demographics.txt` be used directly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of force channels in a walk.
pub const NUM_CHANNELS: usize = 18;

/// Sampling rate of every gaitpdb recording.
pub const SAMPLE_RATE_HZ: u32 = 100;

const SAMPLE_PERIOD_S: f64 = 0.01;
const TIME_TOLERANCE_S: f64 = 1e-6;

/// Largest possible UPDRS total.
pub const UPDRS_MAX: i64 = 176;

/// Where the gait database can be downloaded from.
pub const DATA_SOURCE_URL: &str = "https://physionet.org/content/gaitpdb/1.0.0/";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: malformed row: {reason}", path.display())]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}:{line}: time column is not increasing in 0.01 s steps", path.display())]
    NonMonotoneTime { path: PathBuf, line: usize },
    #[error("{}:{line}: negative force {value} on channel {channel}", path.display())]
    NegativeForce {
        path: PathBuf,
        line: usize,
        channel: SensorChannel,
        value: f64,
    },
    #[error("{}: subject {subject} is not listed in the demographics manifest", path.display())]
    UnknownSubject { path: PathBuf, subject: String },
    #[error("UPDRS score {0} outside [0, 176]")]
    OutOfRange(i64),
    #[error("{}:{line}: {reason}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("no walks left to load under {}", .0.display())]
    EmptyDataset(PathBuf),
    #[error("duplicate walk id {0}")]
    DuplicateWalk(String),
    #[error("checksum mismatch for {}", .0.display())]
    ChecksumMismatch(PathBuf),
    #[error("dataset cache {}: {reason}", path.display())]
    Cache { path: PathBuf, reason: String },
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One of the 18 force signals recorded per walk, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SensorChannel {
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
    L7,
    L8,
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    LTotal,
    RTotal,
}

impl SensorChannel {
    pub const ALL: [SensorChannel; NUM_CHANNELS] = [
        SensorChannel::L1,
        SensorChannel::L2,
        SensorChannel::L3,
        SensorChannel::L4,
        SensorChannel::L5,
        SensorChannel::L6,
        SensorChannel::L7,
        SensorChannel::L8,
        SensorChannel::R1,
        SensorChannel::R2,
        SensorChannel::R3,
        SensorChannel::R4,
        SensorChannel::R5,
        SensorChannel::R6,
        SensorChannel::R7,
        SensorChannel::R8,
        SensorChannel::LTotal,
        SensorChannel::RTotal,
    ];

    /// Column of this channel in a walk's sample matrix.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; NUM_CHANNELS] = [
            "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "R1", "R2", "R3", "R4", "R5", "R6",
            "R7", "R8", "LTotal", "RTotal",
        ];
        NAMES[self.index()]
    }

    pub fn is_total(self) -> bool {
        matches!(self, SensorChannel::LTotal | SensorChannel::RTotal)
    }

    /// The mirror-image sensor under the other foot.
    pub fn pair(self) -> SensorChannel {
        match self {
            SensorChannel::LTotal => SensorChannel::RTotal,
            SensorChannel::RTotal => SensorChannel::LTotal,
            c if c.index() < 8 => Self::ALL[c.index() + 8],
            c => Self::ALL[c.index() - 8],
        }
    }

    pub fn description(self) -> String {
        match self {
            SensorChannel::LTotal => "total VGRF under the left foot".to_string(),
            SensorChannel::RTotal => "total VGRF under the right foot".to_string(),
            c if c.index() < 8 => format!("VGRF at left-foot sensor {}", c.index() + 1),
            c => format!("VGRF at right-foot sensor {}", c.index() - 7),
        }
    }
}

impl fmt::Display for SensorChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown sensor channel '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Control,
    Parkinson,
}

impl Group {
    /// Binary detection target: Control = 0, Parkinson = 1.
    pub fn label(self) -> u8 {
        match self {
            Group::Control => 0,
            Group::Parkinson => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "Control",
            Group::Parkinson => "Parkinson",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pd" | "parkinson" | "parkinsons" => Ok(Group::Parkinson),
            "co" | "control" => Ok(Group::Control),
            other => Err(format!("unknown group '{other}'")),
        }
    }
}

/// UPDRS severity level, 1 (mildest) to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeverityClass(u8);

impl SeverityClass {
    pub const COUNT: usize = 5;

    pub fn new(level: u8) -> Option<Self> {
        (1..=5).contains(&level).then_some(SeverityClass(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }

    /// Zero-based index used as the softmax target.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        u8::try_from(index + 1).ok().and_then(Self::new)
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bins a UPDRS total into the five severity levels
/// (<5, [5,15), [15,25), [25,35), >=35).
pub fn map_updrs_to_class(updrs_total: i64) -> Result<SeverityClass, DataError> {
    if !(0..=UPDRS_MAX).contains(&updrs_total) {
        return Err(DataError::OutOfRange(updrs_total));
    }
    let level = match updrs_total {
        s if s < 5 => 1,
        s if s < 15 => 2,
        s if s < 25 => 3,
        s if s < 35 => 4,
        _ => 5,
    };
    Ok(SeverityClass(level))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub group: Group,
    pub updrs_total: Option<u16>,
}

impl SubjectInfo {
    /// Severity label used for the severity experiments. Controls without a
    /// score are class 1; Parkinson subjects without a score have no label.
    pub fn severity(&self) -> Option<SeverityClass> {
        match (self.updrs_total, self.group) {
            (Some(score), _) => map_updrs_to_class(i64::from(score)).ok(),
            (None, Group::Control) => Some(SeverityClass(1)),
            (None, Group::Parkinson) => None,
        }
    }
}

/// Subject metadata keyed by subject id.
#[derive(Debug, Clone, Default)]
pub struct SubjectRegistry {
    subjects: BTreeMap<String, SubjectInfo>,
}

impl SubjectRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, subject_id: impl Into<String>, info: SubjectInfo) {
        self.subjects.insert(subject_id.into(), info);
    }

    pub fn get(&self, subject_id: &str) -> Option<&SubjectInfo> {
        self.subjects.get(subject_id)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SubjectInfo)> {
        self.subjects.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Reads a demographics manifest.
    pub fn from_manifest(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::parse_manifest(&text, path)
    }

    fn parse_manifest(text: &str, path: &Path) -> Result<Self, DataError> {
        let bad = |line: usize, reason: String| DataError::Manifest {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing header row".to_string()))?;
        let split = delimiter_for(header);
        let columns: Vec<String> = split_fields(header, split)
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let find = |names: &[&str]| columns.iter().position(|c| names.contains(&c.as_str()));
        let id_col = find(&["subject_id", "id", "subject"])
            .ok_or_else(|| bad(header_line, "no subject_id column".to_string()))?;
        let group_col =
            find(&["group"]).ok_or_else(|| bad(header_line, "no group column".to_string()))?;
        let updrs_col = find(&["updrs_total", "updrs"]);

        let mut registry = SubjectRegistry::new();
        for (line_no, line) in lines {
            let fields: Vec<&str> = split_fields(line, split).collect();
            let field = |col: usize| fields.get(col).copied().unwrap_or("");
            let subject_id = field(id_col);
            if subject_id.is_empty() {
                return Err(bad(line_no, "empty subject id".to_string()));
            }
            let group: Group = field(group_col).parse().map_err(|e| bad(line_no, e))?;
            let updrs_total = match updrs_col.map(field) {
                None | Some("") => None,
                Some(v) if v.eq_ignore_ascii_case("nan") || v.eq_ignore_ascii_case("na") => None,
                Some(v) => {
                    let score: f64 = v
                        .parse()
                        .map_err(|_| bad(line_no, format!("bad UPDRS value '{v}'")))?;
                    if score.fract() != 0.0 {
                        return Err(bad(line_no, format!("non-integer UPDRS value '{v}'")));
                    }
                    let score = score as i64;
                    map_updrs_to_class(score).map_err(|e| bad(line_no, e.to_string()))?;
                    Some(score as u16)
                }
            };
            if registry.get(subject_id).is_some() {
                return Err(bad(line_no, format!("duplicate subject {subject_id}")));
            }
            registry.insert(subject_id, SubjectInfo { group, updrs_total });
        }
        Ok(registry)
    }
}

#[derive(Clone, Copy)]
enum Delimiter {
    Tab,
    Comma,
    Whitespace,
}

fn delimiter_for(header: &str) -> Delimiter {
    if header.contains('\t') {
        Delimiter::Tab
    } else if header.contains(',') {
        Delimiter::Comma
    } else {
        Delimiter::Whitespace
    }
}

fn split_fields(line: &str, delimiter: Delimiter) -> Box<dyn Iterator<Item = &str> + '_> {
    match delimiter {
        Delimiter::Tab => Box::new(line.split('\t').map(str::trim)),
        Delimiter::Comma => Box::new(line.split(',').map(str::trim)),
        Delimiter::Whitespace => Box::new(line.split_whitespace()),
    }
}

/// One walking trial: 18 time-aligned force channels plus subject labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walk {
    pub walk_id: String,
    pub subject_id: String,
    pub group: Group,
    pub updrs_total: Option<u16>,
    /// Row-major `num_timesteps x 18` forces in newtons, canonical channel order.
    samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Walk {
    pub fn new(
        walk_id: impl Into<String>,
        subject_id: impl Into<String>,
        info: SubjectInfo,
        samples: Vec<f64>,
    ) -> Result<Self, String> {
        if !samples.len().is_multiple_of(NUM_CHANNELS) {
            return Err(format!(
                "sample buffer of {} values is not a multiple of {NUM_CHANNELS}",
                samples.len()
            ));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(format!("invalid force value {v}"));
        }
        Ok(Walk {
            walk_id: walk_id.into(),
            subject_id: subject_id.into(),
            group: info.group,
            updrs_total: info.updrs_total,
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        })
    }

    pub fn num_timesteps(&self) -> usize {
        self.samples.len() / NUM_CHANNELS
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.samples[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS]
    }

    pub fn info(&self) -> SubjectInfo {
        SubjectInfo {
            group: self.group,
            updrs_total: self.updrs_total,
        }
    }

    pub fn severity(&self) -> Option<SeverityClass> {
        self.info().severity()
    }
}

/// Splits `GaPt03_02` into subject `GaPt03`; `None` when the stem is not
/// `<subject>_<digits>`.
pub fn subject_of_walk_id(walk_id: &str) -> Option<&str> {
    let (subject, trial) = walk_id.rsplit_once('_')?;
    (!subject.is_empty() && !trial.is_empty() && trial.bytes().all(|b| b.is_ascii_digit()))
        .then_some(subject)
}

/// Parses the force matrix of a gaitpdb walk file without subject metadata.
/// Returns row-major `T x 18` samples.
pub fn parse_walk_samples(path: &Path) -> Result<Vec<f64>, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_walk_reader(BufReader::new(file), path)
}

fn parse_walk_reader(reader: impl BufRead, path: &Path) -> Result<Vec<f64>, DataError> {
    let mut samples = Vec::new();
    let mut prev_time: Option<f64> = None;
    let mut row = [0.0f64; NUM_CHANNELS + 1];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for token in line.split_whitespace() {
            if count == row.len() {
                count += 1;
                break;
            }
            row[count] = token.parse().map_err(|_| DataError::MalformedRow {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("non-numeric value '{token}'"),
            })?;
            count += 1;
        }
        if count != row.len() {
            return Err(DataError::MalformedRow {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("expected {} columns", row.len()),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(DataError::MalformedRow {
                path: path.to_path_buf(),
                line: line_no,
                reason: "non-finite value".to_string(),
            });
        }
        let time = row[0];
        if let Some(prev) = prev_time {
            if ((time - prev) - SAMPLE_PERIOD_S).abs() > TIME_TOLERANCE_S {
                return Err(DataError::NonMonotoneTime {
                    path: path.to_path_buf(),
                    line: line_no,
                });
            }
        }
        prev_time = Some(time);
        for (k, &value) in row[1..].iter().enumerate() {
            if value < 0.0 {
                return Err(DataError::NegativeForce {
                    path: path.to_path_buf(),
                    line: line_no,
                    channel: SensorChannel::ALL[k],
                    value,
                });
            }
        }
        samples.extend_from_slice(&row[1..]);
    }
    Ok(samples)
}

/// Parses one walk file and attaches the subject's labels from `registry`.
/// The walk id is the file stem.
pub fn parse_walk_file(path: &Path, registry: &SubjectRegistry) -> Result<Walk, DataError> {
    let walk_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let subject_id = subject_of_walk_id(&walk_id).unwrap_or(&walk_id).to_string();
    let info = *registry
        .get(&subject_id)
        .ok_or_else(|| DataError::UnknownSubject {
            path: path.to_path_buf(),
            subject: subject_id.clone(),
        })?;
    let samples = parse_walk_samples(path)?;
    Ok(Walk {
        walk_id,
        subject_id,
        group: info.group,
        updrs_total: info.updrs_total,
        samples,
        sample_rate_hz: SAMPLE_RATE_HZ,
    })
}

/// Writes a walk in the gaitpdb layout. Values use Rust's shortest
/// round-trip formatting, so re-parsing reproduces the samples exactly.
pub fn write_walk_file(walk: &Walk, path: &Path) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut out = io::BufWriter::new(file);
    for t in 0..walk.num_timesteps() {
        let mut line = format!("{}", t as f64 * SAMPLE_PERIOD_S);
        for v in walk.row(t) {
            line.push('\t');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}").map_err(|e| DataError::io(path, e))?;
    }
    out.flush().map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub walk_id: String,
    pub reason: String,
}

/// Reads an exclusion manifest: one walk id per line, optional `# reason`.
pub fn read_exclusions(path: &Path) -> Result<Vec<Exclusion>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let (id, reason) = match line.split_once('#') {
            Some((id, reason)) => (id.trim(), reason.trim()),
            None => (line.trim(), ""),
        };
        if id.is_empty() {
            continue;
        }
        let reason = if reason.is_empty() {
            "listed in exclusion manifest".to_string()
        } else {
            reason.to_string()
        };
        out.push(Exclusion {
            walk_id: id.to_string(),
            reason,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Walk ids to drop, with reasons.
    pub exclusions: Vec<Exclusion>,
    /// Walks with fewer samples than this are dropped (one window by default).
    pub min_timesteps: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            exclusions: Vec::new(),
            min_timesteps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub group: Group,
    pub updrs_total: Option<u16>,
}

/// A validated, immutable collection of walks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    walks: Vec<Arc<Walk>>,
    subjects: Vec<SubjectRecord>,
    excluded: Vec<Exclusion>,
}

impl Dataset {
    /// Builds a dataset from in-memory walks. Subjects are derived from the
    /// walks and must be consistent across walks.
    pub fn from_walks(walks: Vec<Walk>) -> Result<Self, DataError> {
        Self::assemble(walks.into_iter().map(Arc::new).collect(), Vec::new())
    }

    fn assemble(mut walks: Vec<Arc<Walk>>, excluded: Vec<Exclusion>) -> Result<Self, DataError> {
        walks.sort_by(|a, b| a.walk_id.cmp(&b.walk_id));
        let mut seen = HashSet::new();
        let mut subjects: BTreeMap<&str, SubjectRecord> = BTreeMap::new();
        for walk in &walks {
            if !seen.insert(walk.walk_id.as_str()) {
                return Err(DataError::DuplicateWalk(walk.walk_id.clone()));
            }
            let record =
                subjects
                    .entry(walk.subject_id.as_str())
                    .or_insert_with(|| SubjectRecord {
                        subject_id: walk.subject_id.clone(),
                        group: walk.group,
                        updrs_total: walk.updrs_total,
                    });
            if record.group != walk.group || record.updrs_total != walk.updrs_total {
                return Err(DataError::Cache {
                    path: PathBuf::new(),
                    reason: format!("subject {} has inconsistent labels", walk.subject_id),
                });
            }
        }
        let subjects = subjects.into_values().collect();
        Ok(Dataset {
            walks,
            subjects,
            excluded,
        })
    }

    pub fn walks(&self) -> &[Arc<Walk>] {
        &self.walks
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn excluded(&self) -> &[Exclusion] {
        &self.excluded
    }

    pub fn subject(&self, subject_id: &str) -> Option<&SubjectRecord> {
        self.subjects
            .binary_search_by(|s| s.subject_id.as_str().cmp(subject_id))
            .ok()
            .map(|i| &self.subjects[i])
    }

    pub fn subjects_in(&self, group: Group) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(move |s| s.group == group)
    }

    pub fn walks_in(&self, group: Group) -> impl Iterator<Item = &Arc<Walk>> {
        self.walks.iter().filter(move |w| w.group == group)
    }

    /// SHA-256 over walk ids, labels and samples; identifies the exact data a
    /// run used.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for walk in &self.walks {
            hasher.update(walk.walk_id.as_bytes());
            hasher.update([0, walk.group.label()]);
            hasher.update(walk.updrs_total.map_or(u32::MAX, u32::from).to_le_bytes());
            for v in walk.samples() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex_digest(hasher)
    }

    pub fn save_cache(&self, path: &Path) -> Result<(), DataError> {
        let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut out = io::BufWriter::new(file);
        out.write_all(CACHE_MAGIC)
            .map_err(|e| DataError::io(path, e))?;
        bincode::serialize_into(&mut out, self).map_err(|e| DataError::Cache {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        out.flush().map_err(|e| DataError::io(path, e))
    }

    pub fn load_cache(path: &Path) -> Result<Self, DataError> {
        let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
        let body = bytes
            .strip_prefix(CACHE_MAGIC)
            .ok_or_else(|| DataError::Cache {
                path: path.to_path_buf(),
                reason: "not a gaitnet dataset cache".to_string(),
            })?;
        let dataset: Dataset = bincode::deserialize(body).map_err(|e| DataError::Cache {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let excluded = dataset.excluded.clone();
        Self::assemble(dataset.walks, excluded)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"GNDATA01";

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Loads every `<subject>_<trial>.txt` file under `root`, labelled from the
/// demographics `manifest`. Files are parsed in parallel; errors carry the
/// offending file and line.
pub fn load_dataset(
    root: &Path,
    manifest: &Path,
    options: &LoadOptions,
) -> Result<Dataset, DataError> {
    let registry = SubjectRegistry::from_manifest(manifest)?;
    let manifest_name = manifest.file_name();
    let mut files = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| DataError::io(root, e))? {
        let path = entry.map_err(|e| DataError::io(root, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt")
            || path.file_name() == manifest_name
        {
            continue;
        }
        let is_walk = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(subject_of_walk_id)
            .is_some();
        if is_walk {
            files.push(path);
        }
    }
    files.sort();

    let excluded_ids: HashMap<&str, &str> = options
        .exclusions
        .iter()
        .map(|e| (e.walk_id.as_str(), e.reason.as_str()))
        .collect();
    let mut excluded = Vec::new();
    files.retain(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        match excluded_ids.get(stem) {
            Some(reason) => {
                excluded.push(Exclusion {
                    walk_id: stem.to_string(),
                    reason: reason.to_string(),
                });
                false
            }
            None => true,
        }
    });

    let parsed: Vec<Walk> = files
        .par_iter()
        .map(|p| parse_walk_file(p, &registry))
        .collect::<Result<_, _>>()?;

    let mut walks = Vec::with_capacity(parsed.len());
    for walk in parsed {
        if walk.num_timesteps() < options.min_timesteps {
            let reason = format!(
                "only {} samples, shorter than one {}-sample window",
                walk.num_timesteps(),
                options.min_timesteps
            );
            warn!("excluding walk {}: {reason}", walk.walk_id);
            excluded.push(Exclusion {
                walk_id: walk.walk_id,
                reason,
            });
        } else {
            walks.push(Arc::new(walk));
        }
    }
    if walks.is_empty() {
        return Err(DataError::EmptyDataset(root.to_path_buf()));
    }
    excluded.sort_by(|a, b| a.walk_id.cmp(&b.walk_id));
    let dataset = Dataset::assemble(walks, excluded)?;

    for group in [Group::Parkinson, Group::Control] {
        info!(
            "{group}: {} subjects, {} walks",
            dataset.subjects_in(group).count(),
            dataset.walks_in(group).count()
        );
    }
    let missing = registry
        .iter()
        .filter(|(id, _)| dataset.subject(id).is_none())
        .count();
    if missing > 0 {
        info!("{missing} subjects in the manifest have no walks");
    }
    Ok(dataset)
}

/// Verifies files listed in a `SHA256SUMS.txt` under `root`, if present.
/// Returns the number of files checked.
pub fn verify_checksums(root: &Path) -> Result<usize, DataError> {
    let sums = root.join("SHA256SUMS.txt");
    if !sums.exists() {
        return Ok(0);
    }
    let text = fs::read_to_string(&sums).map_err(|e| DataError::io(&sums, e))?;
    let mut checked = 0;
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let (Some(expected), Some(name)) = (parts.next(), parts.next()) else {
            continue;
        };
        let name = name.trim_start_matches('*');
        let path = root.join(name);
        if !path.exists() {
            continue;
        }
        if expected.len() != 64 {
            return Err(DataError::Manifest {
                path: sums.clone(),
                line: i + 1,
                reason: "expected a hex SHA-256 digest".to_string(),
            });
        }
        let bytes = fs::read(&path).map_err(|e| DataError::io(&path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        if !hex_digest(hasher).eq_ignore_ascii_case(expected) {
            return Err(DataError::ChecksumMismatch(path));
        }
        checked += 1;
    }
    Ok(checked)
}
