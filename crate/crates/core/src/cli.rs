//! The `gaitnet` command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 training failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evaluation::{
    ablation_csv, ablation_pairs, ablation_table, detection_csv, detection_table, fold_seed,
    normalized_confusion_csv, pair_name, parse_pair, predictions_csv, run_ablation, run_cv,
    severity_confusion_table, severity_csv, severity_table, Confusion, CvOptions, EvalError,
    Predictor,
};
use crate::model::{CheckpointError, DropoutRates, ModelConfig, Task};
use crate::training::{TrainConfig, TrainError};
use crate::vgrf::{
    hex_digest, load_dataset, parse_walk_samples, read_exclusions, verify_checksums, DataError,
    Dataset, Group, LoadOptions, SeverityClass, DATA_SOURCE_URL,
};
use crate::windowing::{build_folds, window_count, FoldError, FoldPlan, WindowParams};
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "gaitnet",
    version,
    about = "Parkinson's disease detection and severity prediction from gait VGRF signals"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate walk files into a dataset cache.
    Ingest(IngestArgs),
    /// Subject-level k-fold cross-validation.
    Cv(CvArgs),
    /// Detection cross-validation with sensor pairs removed one at a time.
    Ablate(AblateArgs),
    /// Classify one walk file with a trained checkpoint.
    Predict(PredictArgs),
    /// Re-execute a recorded cv or ablate run.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Directory holding the walk files.
    #[arg(long)]
    data_root: PathBuf,
    /// Demographics manifest (subject id, group, UPDRS).
    #[arg(long)]
    manifest: PathBuf,
    /// Walk ids to leave out, one per line with optional `# reason`.
    #[arg(long)]
    exclusions: Option<PathBuf>,
    /// Output dataset cache.
    #[arg(long)]
    out: PathBuf,
    /// Window length for the reported window counts and the short-walk rule.
    #[arg(long, default_value_t = crate::windowing::DEFAULT_WINDOW_LEN)]
    window_len: usize,
    /// Window stride for the reported window counts.
    #[arg(long, default_value_t = crate::windowing::DEFAULT_STRIDE)]
    stride: usize,
}

#[derive(Debug, Args, Clone)]
struct RunArgs {
    /// Dataset cache written by `ingest`.
    #[arg(long)]
    cache: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Seed for fold assignment, initialization and dropout.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with [windowing], [training] and [model] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reuse a fold assignment instead of drawing one.
    #[arg(long)]
    fold_plan: Option<PathBuf>,
    /// Directory for reports, logs, checkpoints and the run manifest.
    #[arg(long)]
    out_dir: PathBuf,
    /// Folds trained concurrently (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct CvArgs {
    /// `detection` or `severity`.
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// `all`, or a comma-separated list such as `L3R3,Total`.
    #[arg(long, default_value = "all")]
    pairs: String,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Checkpoint written by `cv` or `ablate`, e.g. `fold_0/checkpoints/best.ckpt`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Walk file in the gaitpdb layout.
    #[arg(long)]
    walk_file: PathBuf,
    /// Step between window starts.
    #[arg(long, default_value_t = crate::windowing::DEFAULT_STRIDE)]
    stride: usize,
}

#[derive(Debug, Args)]
struct RerunArgs {
    /// `run_manifest.json` of the run to repeat.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the repeated run's outputs.
    #[arg(long)]
    out_dir: PathBuf,
    /// Folds trained concurrently (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

/// Settings read from the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub windowing: WindowParams,
    pub training: TrainConfig,
    pub model: ModelSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub dropout: DropoutRates,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex_digest(Sha256::new_with_prefix(json))
    }

    fn model(&self, task: Task) -> ModelConfig {
        ModelConfig {
            window_len: self.windowing.window_len,
            dropout: self.model.dropout,
            ..ModelConfig::new(task)
        }
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub task: Option<Task>,
    /// Ablated pairs, for ablation runs.
    pub pairs: Vec<String>,
    pub config: RunConfig,
    pub config_hash: String,
    pub dataset_cache: PathBuf,
    pub dataset_checksum: String,
    /// Fold plan file, relative to the manifest's directory.
    pub fold_plan: PathBuf,
    pub fold_plan_sha256: String,
    pub seed: u64,
    pub fold_seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Training(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Training(_) => EXIT_TRAINING,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FoldError> for CliError {
    fn from(e: FoldError) -> Self {
        match e {
            FoldError::InvalidK(_) | FoldError::TooFewSubjects { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Windowing(e) => e.into(),
            EvalError::Invalid(m) => CliError::Usage(m),
            EvalError::NoFullWindows(_) | EvalError::Io { .. } | EvalError::EmptyValidation(_) => {
                CliError::Data(e.to_string())
            }
            EvalError::Train(TrainError::InvalidConfig(m)) => CliError::Usage(m),
            other => CliError::Training(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex_digest(Sha256::new_with_prefix(bytes))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Rerun(a) => cmd_rerun(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (kind, msg) = match &e {
                CliError::Usage(m) => ("usage error", m),
                CliError::Data(m) => ("data error", m),
                CliError::Training(m) => ("training failed", m),
            };
            eprintln!("gaitnet: {kind}: {msg}");
            e.code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn cmd_ingest(a: IngestArgs) -> Result<(), CliError> {
    require_file(&a.manifest, "demographics manifest")?;
    if !a.data_root.is_dir() {
        return Err(CliError::Usage(format!(
            "data root {} is not a directory",
            a.data_root.display()
        )));
    }
    if a.window_len == 0 || a.stride == 0 || a.stride > a.window_len {
        return Err(CliError::Usage(format!(
            "window length must be positive and stride in 1..=window length, got {} and {}",
            a.window_len, a.stride
        )));
    }
    let started = now_unix();
    println!("source: {DATA_SOURCE_URL}");
    match verify_checksums(&a.data_root)? {
        0 => println!("checksums: no SHA256SUMS.txt entries found, not verified"),
        n => println!("checksums: {n} files verified"),
    }
    let mut options = LoadOptions {
        min_timesteps: a.window_len,
        ..LoadOptions::default()
    };
    if let Some(path) = &a.exclusions {
        require_file(path, "exclusion manifest")?;
        options.exclusions = read_exclusions(path)?;
    }
    let dataset = load_dataset(&a.data_root, &a.manifest, &options)?;

    let pd = dataset.subjects_in(Group::Parkinson).count();
    let co = dataset.subjects_in(Group::Control).count();
    println!("subjects: {pd} Parkinson / {co} control");
    let windows = |g: Group| -> usize {
        dataset
            .walks_in(g)
            .map(|w| window_count(w.num_timesteps(), a.window_len, a.stride))
            .sum()
    };
    let (wpd, wco) = (windows(Group::Parkinson), windows(Group::Control));
    println!(
        "walks: {} Parkinson / {} control ({} total, {} excluded)",
        dataset.walks_in(Group::Parkinson).count(),
        dataset.walks_in(Group::Control).count(),
        dataset.walks().len(),
        dataset.excluded().len()
    );
    for e in dataset.excluded() {
        println!("  excluded {}: {}", e.walk_id, e.reason);
    }
    println!(
        "windows (length {}, stride {}): {wpd} Parkinson / {wco} control ({} total)",
        a.window_len,
        a.stride,
        wpd + wco
    );
    let mut classes = [0usize; SeverityClass::COUNT];
    let mut unlabeled = 0;
    for s in dataset.subjects() {
        let info = crate::vgrf::SubjectInfo {
            group: s.group,
            updrs_total: s.updrs_total,
        };
        match info.severity() {
            Some(c) => classes[c.index()] += 1,
            None => unlabeled += 1,
        }
    }
    println!(
        "severity classes (subjects): {}{}",
        classes
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{}:{n}", i + 1))
            .collect::<Vec<_>>()
            .join(" "),
        if unlabeled > 0 {
            format!(", {unlabeled} without UPDRS")
        } else {
            String::new()
        }
    );

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    dataset.save_cache(&a.out)?;
    let checksum = dataset.checksum();
    println!("cache: {} (sha256 {checksum})", a.out.display());

    let manifest = serde_json::json!({
        "command": "ingest",
        "tool_version": VERSION,
        "data_root": a.data_root,
        "demographics": a.manifest,
        "exclusions": a.exclusions,
        "dataset_checksum": checksum,
        "walks": dataset.walks().len(),
        "started_unix": started,
        "finished_unix": now_unix(),
    });
    let path = manifest_path_for_cache(&a.out);
    write_file(
        &path,
        serde_json::to_string_pretty(&manifest).expect("json"),
    )?;
    Ok(())
}

fn manifest_path_for_cache(cache: &Path) -> PathBuf {
    let mut name = cache.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    cache.with_file_name(name)
}

struct Prepared {
    dataset: Dataset,
    plan: FoldPlan,
    config: RunConfig,
    seed: u64,
    jobs: usize,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    require_file(path, "config file")?;
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    RunConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn check_plan_covers(dataset: &Dataset, plan: &FoldPlan) -> Result<(), CliError> {
    let missing: Vec<&str> = dataset
        .subjects()
        .iter()
        .map(|s| s.subject_id.as_str())
        .filter(|id| plan.fold_of(id).is_none())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "fold plan does not assign subjects: {}",
            missing.join(", ")
        )))
    }
}

fn prepare(a: &RunArgs) -> Result<Prepared, CliError> {
    if a.folds < 2 {
        return Err(CliError::Usage(format!(
            "--folds must be at least 2, got {}",
            a.folds
        )));
    }
    if a.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be positive".into()));
    }
    let mut config = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        config.training.seed = seed;
    }
    config
        .training
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let w = &config.windowing;
    if w.stride == 0 || w.stride > w.window_len {
        return Err(CliError::Usage(format!(
            "windowing stride must be in 1..={}, got {}",
            w.window_len, w.stride
        )));
    }
    require_file(&a.cache, "dataset cache")?;
    let dataset = Dataset::load_cache(&a.cache)?;
    let seed = config.training.seed;
    let plan = match &a.fold_plan {
        Some(path) => {
            require_file(path, "fold plan")?;
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let plan = FoldPlan::from_manifest(&text)?;
            if plan.k() != a.folds {
                warn!(
                    "fold plan has {} folds; ignoring --folds {}",
                    plan.k(),
                    a.folds
                );
            }
            plan
        }
        None => build_folds(&dataset, a.folds, seed)?,
    };
    check_plan_covers(&dataset, &plan)?;
    Ok(Prepared {
        dataset,
        plan,
        config,
        seed,
        jobs: a.jobs.unwrap_or_else(default_jobs),
    })
}

fn write_run_files(
    out_dir: &Path,
    p: &Prepared,
    cache: &Path,
    command: &str,
    task: Option<Task>,
    pairs: Vec<String>,
    started: u64,
) -> Result<(), CliError> {
    let plan_text = p.plan.to_manifest();
    write_file(&out_dir.join("folds.tsv"), &plan_text)?;
    let toml = toml::to_string(&p.config).expect("config serializes");
    write_file(&out_dir.join("config.toml"), toml)?;
    let manifest = RunManifest {
        command: command.to_string(),
        tool_version: VERSION.to_string(),
        task,
        pairs,
        config: p.config.clone(),
        config_hash: p.config.hash(),
        dataset_cache: fs::canonicalize(cache).unwrap_or_else(|_| cache.to_path_buf()),
        dataset_checksum: p.dataset.checksum(),
        fold_plan: PathBuf::from("folds.tsv"),
        fold_plan_sha256: sha256_hex(plan_text.as_bytes()),
        seed: p.seed,
        fold_seeds: (0..p.plan.k()).map(|f| fold_seed(p.seed, f)).collect(),
        started_unix: started,
        finished_unix: now_unix(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out_dir.join("run_manifest.json"), json)
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn execute_cv(task: Task, p: &Prepared, cache: &Path, out_dir: &Path) -> Result<(), CliError> {
    let started = now_unix();
    create_out_dir(out_dir)?;
    let options = CvOptions {
        window: p.config.windowing,
        out_dir: Some(out_dir.to_path_buf()),
        jobs: p.jobs,
    };
    let model = p.config.model(task);
    let report = run_cv(&p.dataset, &p.plan, &model, &p.config.training, &options)?;
    let summary = match task {
        Task::Detection => {
            write_file(
                &out_dir.join("detection_metrics.csv"),
                detection_csv(&report),
            )?;
            detection_table(&report)
        }
        Task::Severity => {
            write_file(&out_dir.join("severity_metrics.csv"), severity_csv(&report))?;
            let (Confusion::Severity(seg), Confusion::Severity(walk)) =
                (report.segment, report.subject)
            else {
                unreachable!("severity report");
            };
            write_file(
                &out_dir.join("confusion_segment.csv"),
                normalized_confusion_csv(&seg),
            )?;
            write_file(
                &out_dir.join("confusion_walk.csv"),
                normalized_confusion_csv(&walk),
            )?;
            format!(
                "{}\nSegment-level confusion (% of true class)\n{}\nWalk-level confusion (% of true class)\n{}",
                severity_table(&report),
                severity_confusion_table(&seg),
                severity_confusion_table(&walk)
            )
        }
    };
    write_file(&out_dir.join("predictions.csv"), predictions_csv(&report))?;
    write_file(&out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    write_run_files(out_dir, p, cache, "cv", Some(task), Vec::new(), started)
}

fn cmd_cv(a: CvArgs) -> Result<(), CliError> {
    let p = prepare(&a.run)?;
    execute_cv(a.task, &p, &a.run.cache, &a.run.out_dir)
}

fn parse_pairs(arg: &str) -> Result<Vec<crate::vgrf::SensorChannel>, CliError> {
    if arg.trim().eq_ignore_ascii_case("all") {
        return Ok(ablation_pairs());
    }
    let pairs: Vec<_> = arg
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_pair)
        .collect::<Result<_, _>>()
        .map_err(CliError::Usage)?;
    if pairs.is_empty() {
        return Err(CliError::Usage("--pairs is empty".into()));
    }
    Ok(pairs)
}

fn execute_ablation(
    pairs: &[crate::vgrf::SensorChannel],
    p: &Prepared,
    cache: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let started = now_unix();
    create_out_dir(out_dir)?;
    let options = CvOptions {
        window: p.config.windowing,
        out_dir: Some(out_dir.to_path_buf()),
        jobs: p.jobs,
    };
    let base = p.config.model(Task::Detection);
    let report = run_ablation(
        &p.dataset,
        &p.plan,
        &base,
        &p.config.training,
        pairs,
        &options,
    )?;
    let table = ablation_table(&report);
    write_file(&out_dir.join("ablation.csv"), ablation_csv(&report))?;
    write_file(&out_dir.join("summary.txt"), &table)?;
    print!("{table}");
    let names = pairs.iter().map(|c| pair_name(*c)).collect();
    write_run_files(
        out_dir,
        p,
        cache,
        "ablate",
        Some(Task::Detection),
        names,
        started,
    )
}

fn cmd_ablate(a: AblateArgs) -> Result<(), CliError> {
    let pairs = parse_pairs(&a.pairs)?;
    let p = prepare(&a.run)?;
    info!("ablating {} sensor pairs", pairs.len());
    execute_ablation(&pairs, &p, &a.run.cache, &a.run.out_dir)
}

fn cmd_rerun(a: RerunArgs) -> Result<(), CliError> {
    require_file(&a.manifest, "run manifest")?;
    let text = fs::read_to_string(&a.manifest).map_err(|e| io_error(&a.manifest, e))?;
    let m: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.manifest.display())))?;
    if m.config.hash() != m.config_hash {
        return Err(CliError::Data(
            "run manifest config does not match its hash".into(),
        ));
    }
    let dataset = Dataset::load_cache(&m.dataset_cache)?;
    if dataset.checksum() != m.dataset_checksum {
        return Err(CliError::Data(format!(
            "dataset cache {} changed since the recorded run",
            m.dataset_cache.display()
        )));
    }
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let plan_path = base.join(&m.fold_plan);
    let plan_text = fs::read_to_string(&plan_path).map_err(|e| io_error(&plan_path, e))?;
    if sha256_hex(plan_text.as_bytes()) != m.fold_plan_sha256 {
        return Err(CliError::Data(format!(
            "fold plan {} changed",
            plan_path.display()
        )));
    }
    let plan = FoldPlan::from_manifest(&plan_text)?;
    let p = Prepared {
        dataset,
        plan,
        config: m.config.clone(),
        seed: m.seed,
        jobs: a.jobs.unwrap_or_else(default_jobs),
    };
    match m.command.as_str() {
        "cv" => {
            let task = m
                .task
                .ok_or_else(|| CliError::Usage("cv manifest without a task".into()))?;
            execute_cv(task, &p, &m.dataset_cache, &a.out_dir)
        }
        "ablate" => {
            let pairs: Vec<_> = m
                .pairs
                .iter()
                .map(|s| parse_pair(s))
                .collect::<Result<_, _>>()
                .map_err(CliError::Usage)?;
            execute_ablation(&pairs, &p, &m.dataset_cache, &a.out_dir)
        }
        other => Err(CliError::Usage(format!("cannot rerun command '{other}'"))),
    }
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.walk_file, "walk file")?;
    if a.stride == 0 {
        return Err(CliError::Usage("--stride must be positive".into()));
    }
    let predictor = Predictor::from_checkpoint(&a.checkpoint)?;
    let samples = parse_walk_samples(&a.walk_file)?;
    let decision = predictor.classify_walk(&samples, a.stride)?;
    let task = predictor.task();
    println!(
        "model: {} ({} channels, window {})",
        task,
        predictor.network().config().channels.len(),
        predictor.window_len()
    );
    let len = predictor.window_len();
    let count = decision.windows();
    let mut windows = Vec::with_capacity(count * len * crate::vgrf::NUM_CHANNELS);
    for w in 0..count {
        let start = w * a.stride * crate::vgrf::NUM_CHANNELS;
        windows.extend_from_slice(&samples[start..start + len * crate::vgrf::NUM_CHANNELS]);
    }
    let probs = predictor
        .predict_windows(&windows, count)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!("windows: {count}");
    let units = task.output_units();
    for (w, row) in probs.chunks_exact(units).enumerate() {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
        println!("  window {w} (start {}): {}", w * a.stride, cells.join(" "));
    }
    let labels = decision.votes.len();
    for label in 0..labels {
        let d = crate::evaluation::WalkDecision {
            label,
            ..decision.clone()
        };
        println!(
            "  {}: {} windows ({:.1}%)",
            d.label_name(),
            decision.votes[label],
            100.0 * decision.fraction(label)
        );
    }
    println!("decision: {}", decision.summary());
    Ok(())
}
