//! Commands behind the `cata` binary.
//!
//! Each command is a plain function returning its artifact so tests can drive
//! it without spawning a process. JSON artifacts carry `"schema": 1` and a
//! manifest echoing the fully resolved config, the seed and the tool version.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cata_core::auction::{run_auction, Algorithm, AuctionConfig, AuctionError, AuctionResult};
use cata_core::geometry::Vec2;
use cata_core::oracle::{evaluate_objective, MAX_ORACLE_SIZE};
use cata_core::rewards::RewardError;
use cata_core::scenarios::{
    run_batch_keys, summarize, trial_rng, verify_bound_using, BatchConfig, BoundConfig, BoundRow, CellSummary,
    ScenarioError, TrialKey, TrialRow, WorldSpec,
};
use cata_core::sim::{SimConfig, SimError, Simulation, TraceRow, TrialMetrics};
use cata_core::stigmergy::AssignmentSet;
use cata_core::world::{Robot, RobotId, Task, TaskId, World};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Io(_) => 3,
            CliError::Violation(_) => 4,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn io_error(path: &Path, e: impl Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Parses JSON, reporting failures as `path:line:column: message`.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        Some(p) => parse_json(p, &read_text(p)?),
        None => Ok(T::default()),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

/// Writes to `out`, or stdout when absent.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

/// Dedicated pool for `--jobs`, or `None` for rayon's global pool.
fn thread_pool(jobs: Option<usize>) -> Result<Option<rayon::ThreadPool>, CliError> {
    match jobs {
        None => Ok(None),
        Some(0) => Err(CliError::Input("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| CliError::Input(format!("thread pool: {e}"))),
    }
}

fn in_pool<T: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_path: Option<String>,
    /// Every setting in force, defaults included.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    fn new<C: Serialize>(command: &str, seed: u64, config_path: Option<&Path>, config: &C) -> Self {
        Self {
            tool: "cata".into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            seed,
            config_path: config_path.map(|p| p.display().to_string()),
            config: serde_json::to_value(config).expect("configs serialize"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    fn output(mut self, name: &str, path: Option<&Path>) -> Self {
        if let Some(p) = path {
            self.outputs.insert(name.into(), p.display().to_string());
        }
        self
    }
}

// ---------------------------------------------------------------- worlds

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotEntry {
    id: u32,
    x: f64,
    y: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    id: u32,
    x: f64,
    y: f64,
    value: Option<f64>,
    lambda: Option<f64>,
}

/// Explicit coordinates: `robots: [{id, x, y}]`, `tasks: [{id, x, y, value?, lambda?}]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoordinateFile {
    robots: Vec<RobotEntry>,
    tasks: Vec<TaskEntry>,
}

/// Loads a coordinate file, or a generator spec (recognised by its
/// `layout` key) sampled with `seed`.
pub fn load_world(path: &Path, seed: u64, auction: &AuctionConfig) -> Result<World, CliError> {
    let text = read_text(path)?;
    let probe: serde_json::Value = parse_json(path, &text)?;
    let invalid = |e: &dyn Display| CliError::Input(format!("{}: {e}", path.display()));
    if probe.get("layout").is_some() {
        let spec: WorldSpec = parse_json(path, &text)?;
        return Ok(spec.build(&mut trial_rng(seed, 0))?);
    }
    let file: CoordinateFile = parse_json(path, &text)?;
    let robots = file.robots.iter().map(|r| Robot { id: RobotId(r.id), position: Vec2::new(r.x, r.y) }).collect();
    let tasks = file
        .tasks
        .iter()
        .map(|t| {
            Task::new(
                TaskId(t.id),
                Vec2::new(t.x, t.y),
                t.value.unwrap_or(auction.default_value),
                t.lambda.unwrap_or(auction.default_discount),
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| invalid(&e))?;
    World::new(robots, tasks).map_err(|e| invalid(&e))
}

// ---------------------------------------------------------------- assign

#[derive(Debug, Clone)]
pub struct AssignArgs {
    pub algorithm: Algorithm,
    pub world: PathBuf,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub robot: RobotId,
    pub task: TaskId,
    pub bid: f64,
    pub round: usize,
    pub safety_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentArtifact {
    pub schema: u32,
    pub manifest: Manifest,
    pub algorithm: Algorithm,
    pub world: World,
    /// In the order they were won.
    pub pairs: Vec<PairRecord>,
    pub objective_sequential: f64,
    /// All pairs re-scored against each other at the floor distance.
    pub objective_joint: f64,
    pub joint_safety_distance: f64,
    pub horizon_trace: Vec<f64>,
    pub rounds_used: usize,
    pub complete: bool,
    pub timed_out: bool,
}

impl AssignmentArtifact {
    pub fn assignments(&self) -> Result<AssignmentSet, CliError> {
        AssignmentSet::from_pairs(self.pairs.iter().map(|p| (p.robot, p.task)))
            .map_err(|e| CliError::Input(format!("assignment artifact: {e}")))
    }
}

pub fn assign(args: &AssignArgs) -> Result<AssignmentArtifact, CliError> {
    let config: AuctionConfig = load_config(args.config.as_deref())?;
    config.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let world = load_world(&args.world, args.seed, &config)?;
    let (result, timed_out): (AuctionResult, bool) = match run_auction(&world, &config, args.algorithm) {
        Ok(r) => (r, false),
        Err(AuctionError::Timeout { partial, .. }) => (*partial, true),
        Err(e) => return Err(CliError::Input(e.to_string())),
    };
    let joint = evaluate_objective(&result.assignments, &world, config.safety_distance_min, config.speed)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let manifest = Manifest::new("assign", args.seed, args.config.as_deref(), &config)
        .input("world", &args.world)
        .output("assignment", args.out.as_deref());
    Ok(AssignmentArtifact {
        schema: SCHEMA,
        manifest,
        algorithm: args.algorithm,
        pairs: result
            .winners
            .iter()
            .map(|w| PairRecord {
                robot: w.robot,
                task: w.task,
                bid: w.bid,
                round: w.round,
                safety_distance: w.safety_distance,
            })
            .collect(),
        world,
        objective_sequential: result.objective_value,
        objective_joint: joint,
        joint_safety_distance: config.safety_distance_min,
        horizon_trace: result.horizon_trace,
        rounds_used: result.rounds_used,
        complete: result.complete,
        timed_out,
    })
}

pub fn run_assign(args: &AssignArgs) -> Result<(), CliError> {
    let artifact = assign(args)?;
    emit(args.out.as_deref(), &to_json(&artifact))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub assignment: PathBuf,
    pub trace: Option<PathBuf>,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPosition {
    pub robot: RobotId,
    pub x: f64,
    pub y: f64,
    pub arrived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationArtifact {
    pub schema: u32,
    pub manifest: Manifest,
    pub algorithm: Algorithm,
    pub metrics: TrialMetrics,
    pub final_positions: Vec<FinalPosition>,
}

/// Runs the simulation; returns the artifact and the trace rows.
pub fn simulate(args: &SimulateArgs) -> Result<(SimulationArtifact, Vec<TraceRow>), CliError> {
    let config: SimConfig = load_config(args.config.as_deref())?;
    let input: AssignmentArtifact = parse_json(&args.assignment, &read_text(&args.assignment)?)?;
    let assignments = input.assignments()?;
    let mut sim = Simulation::new(&input.world, &assignments, &config)?;
    let mut rows = Vec::new();
    while !sim.is_finished() {
        rows.extend(sim.step());
    }
    let manifest = Manifest::new("simulate", args.seed, args.config.as_deref(), &config)
        .input("assignment", &args.assignment)
        .output("metrics", args.out.as_deref())
        .output("trace", args.trace.as_deref());
    let final_positions = sim
        .robots()
        .iter()
        .map(|r| FinalPosition { robot: r.id, x: r.position.x, y: r.position.y, arrived: r.arrived })
        .collect();
    let artifact = SimulationArtifact {
        schema: SCHEMA,
        manifest,
        algorithm: input.algorithm,
        metrics: sim.metrics().clone(),
        final_positions,
    };
    Ok((artifact, rows))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (artifact, rows) = simulate(args)?;
    if let Some(trace) = &args.trace {
        write_csv(trace, &rows)?;
    }
    emit(args.out.as_deref(), &to_json(&artifact))
}

// ---------------------------------------------------------------- batch

#[derive(Debug, Clone)]
pub struct BatchArgs {
    pub out: PathBuf,
    pub trials: Option<usize>,
    pub jobs: Option<usize>,
    pub resume: bool,
    pub seed: u64,
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub schema: u32,
    pub manifest: Manifest,
    pub cells: Vec<CellSummary>,
}

pub const ROWS_FILE: &str = "rows.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    schema: u32,
    manifest: Manifest,
}

/// Sort key placing rows in run order.
fn row_order(config: &BatchConfig, row: &TrialRow) -> (usize, usize, usize) {
    let cell = config.cells.iter().position(|c| c.label() == row.cell).unwrap_or(usize::MAX);
    let algo = config.algorithms.iter().position(|&a| a == row.algorithm).unwrap_or(usize::MAX);
    (cell, row.trial, algo)
}

/// Rows already on disk for fully finished trials. A torn final record from
/// an interrupted run is dropped.
fn completed_rows(path: &Path, config: &BatchConfig) -> Result<Vec<TrialRow>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_error(path, e))?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<TrialRow>() {
        match record {
            Ok(row) => rows.push(row),
            Err(_) => break,
        }
    }
    let mut per_key: BTreeMap<(usize, usize), Vec<TrialRow>> = BTreeMap::new();
    for row in rows {
        let (cell, trial, algo) = row_order(config, &row);
        if cell == usize::MAX || algo == usize::MAX || trial >= config.trials {
            return Err(CliError::Input(format!("{}: row does not belong to this batch", path.display())));
        }
        per_key.entry((cell, trial)).or_default().push(row);
    }
    let want: BTreeSet<Algorithm> = config.algorithms.iter().copied().collect();
    Ok(per_key
        .into_values()
        .filter(|g| g.iter().map(|r| r.algorithm).collect::<BTreeSet<_>>() == want && g.len() == want.len())
        .flatten()
        .collect())
}

fn rewrite_rows(path: &Path, rows: &[TrialRow]) -> Result<(), CliError> {
    let tmp = path.with_extension("csv.tmp");
    write_csv(&tmp, rows)?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

fn append_rows(path: &Path, rows: &[TrialRow]) -> Result<(), CliError> {
    let file = fs::OpenOptions::new().append(true).open(path).map_err(|e| io_error(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn resolve_batch_config(args: &BatchArgs) -> Result<BatchConfig, CliError> {
    let mut config: BatchConfig = load_config(args.config.as_deref())?;
    if let Some(t) = args.trials {
        config.trials = t;
    }
    config.validate()?;
    Ok(config)
}

/// Runs (or resumes) a batch into `args.out`. Completed trials are appended
/// to `rows.csv` as they finish, in trial order, so an interrupted run can
/// be resumed.
pub fn batch(args: &BatchArgs) -> Result<BatchSummary, CliError> {
    let config = resolve_batch_config(args)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let rows_path = args.out.join(ROWS_FILE);
    let summary_path = args.out.join(SUMMARY_FILE);
    let manifest_path = args.out.join(MANIFEST_FILE);
    // Paths relative to the output directory, so a copied or relocated batch
    // reproduces byte-for-byte.
    let manifest = Manifest::new("batch", args.seed, args.config.as_deref(), &config)
        .output("rows", Some(Path::new(ROWS_FILE)))
        .output("summary", Some(Path::new(SUMMARY_FILE)))
        .output("manifest", Some(Path::new(MANIFEST_FILE)));
    let manifest_file = ManifestFile { schema: SCHEMA, manifest: manifest.clone() };

    let mut rows = Vec::new();
    if args.resume && manifest_path.exists() {
        let previous: ManifestFile = parse_json(&manifest_path, &read_text(&manifest_path)?)?;
        if previous.manifest.config != manifest.config || previous.manifest.seed != manifest.seed {
            return Err(CliError::Input(format!(
                "{}: existing batch used a different config or seed; refusing to resume",
                manifest_path.display()
            )));
        }
        rows = completed_rows(&rows_path, &config)?;
        rows.sort_by_key(|r| row_order(&config, r));
    }
    fs::write(&manifest_path, to_json(&manifest_file)).map_err(|e| io_error(&manifest_path, e))?;
    rewrite_rows(&rows_path, &rows)?;
    if rows.is_empty() {
        // Header only, so appends below stay headerless.
        let mut w = csv::Writer::from_path(&rows_path).map_err(|e| io_error(&rows_path, e))?;
        w.write_record(TRIAL_ROW_HEADER).map_err(|e| io_error(&rows_path, e))?;
        w.flush().map_err(|e| io_error(&rows_path, e))?;
    }

    let done: BTreeSet<(usize, usize)> = rows.iter().map(|r| row_order(&config, r)).map(|(c, t, _)| (c, t)).collect();
    let pending: Vec<TrialKey> =
        config.trial_keys().into_iter().filter(|k| !done.contains(&(k.cell, k.trial))).collect();
    let pool = thread_pool(args.jobs)?;
    let chunk = in_pool(&pool, rayon::current_num_threads).max(1) * 4;
    for keys in pending.chunks(chunk) {
        let fresh = in_pool(&pool, || run_batch_keys(&config, args.seed, keys))?;
        append_rows(&rows_path, &fresh)?;
        rows.extend(fresh);
    }
    rows.sort_by_key(|r| row_order(&config, r));
    rewrite_rows(&rows_path, &rows)?;

    let summary = BatchSummary { schema: SCHEMA, manifest, cells: summarize(&rows) };
    fs::write(&summary_path, to_json(&summary)).map_err(|e| io_error(&summary_path, e))?;
    Ok(summary)
}

/// Column names of `rows.csv`, matching [`TrialRow`]'s fields.
pub const TRIAL_ROW_HEADER: [&str; 14] = [
    "cell",
    "trial",
    "algorithm",
    "robots",
    "assigned",
    "rounds_used",
    "objective",
    "auction_timeout",
    "deadlock",
    "avoidance",
    "maintain_one",
    "maintain_multi",
    "completion_steps",
    "min_separation",
];

// ---------------------------------------------------------------- verify-bound

#[derive(Debug, Clone)]
pub struct VerifyArgs {
    pub count: Option<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundArtifact {
    pub schema: u32,
    pub manifest: Manifest,
    pub instances: usize,
    pub min_ratio: f64,
    pub mean_ratio: f64,
    pub violations: Vec<BoundRow>,
    pub rows: Vec<BoundRow>,
}

pub fn resolve_bound_config(args: &VerifyArgs) -> Result<BoundConfig, CliError> {
    let mut config: BoundConfig = load_config(args.config.as_deref())?;
    if let Some(c) = args.count {
        config.instances = c;
    }
    if let Some(n) = args.n_min {
        config.robots_min = n;
    }
    if let Some(n) = args.n_max {
        config.robots_max = n;
    }
    if config.robots_max > MAX_ORACLE_SIZE {
        return Err(CliError::Input(format!(
            "robots_max {} exceeds the exact-optimum limit of {MAX_ORACLE_SIZE}",
            config.robots_max
        )));
    }
    Ok(config)
}

/// Bound check scoring CATA with `evaluate`; a violation is reported as an
/// error after the artifact is produced.
pub fn verify_bound_with<F>(args: &VerifyArgs, evaluate: F) -> Result<(BoundArtifact, Option<CliError>), CliError>
where
    F: Fn(&AssignmentSet, &World, f64, f64) -> Result<f64, RewardError> + Sync + Send,
{
    let config = resolve_bound_config(args)?;
    let pool = thread_pool(args.jobs)?;
    let report = in_pool(&pool, || verify_bound_using(&config, args.seed, evaluate))?;
    let manifest =
        Manifest::new("verify-bound", args.seed, args.config.as_deref(), &config).output("report", args.out.as_deref());
    let violations: Vec<BoundRow> =
        report.rows.iter().filter(|r| report.violations.contains(&r.instance)).cloned().collect();
    let failure = (!violations.is_empty()).then(|| {
        let list: Vec<String> = violations
            .iter()
            .map(|v| format!("seed {} instance {} (ratio {:.6})", args.seed, v.instance, v.ratio))
            .collect();
        CliError::Violation(format!("objective bound violated: {}", list.join(", ")))
    });
    let artifact = BoundArtifact {
        schema: SCHEMA,
        manifest,
        instances: report.instances,
        min_ratio: report.min_ratio,
        mean_ratio: report.mean_ratio,
        violations,
        rows: report.rows,
    };
    Ok((artifact, failure))
}

pub fn run_verify_bound_with<F>(args: &VerifyArgs, evaluate: F) -> Result<(), CliError>
where
    F: Fn(&AssignmentSet, &World, f64, f64) -> Result<f64, RewardError> + Sync + Send,
{
    let (artifact, failure) = verify_bound_with(args, evaluate)?;
    emit(args.out.as_deref(), &to_json(&artifact))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn run_verify_bound(args: &VerifyArgs) -> Result<(), CliError> {
    run_verify_bound_with(args, evaluate_objective)
}
