//! Scenario generation and batch experiments.
//!
//! Every random draw comes from a ChaCha8 stream derived from a master seed
//! and the trial's index, so a trial's outcome does not depend on how many
//! worker threads ran the batch or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{run_auction, Algorithm, AuctionConfig, AuctionError};
use crate::geometry::Vec2;
use crate::oracle::{compare_with_cata_using, evaluate_objective, OracleError, RATIO_SLACK};
use crate::rewards::RewardError;
use crate::sim::{run_trial, SimConfig, SimError};
use crate::stigmergy::AssignmentSet;
use crate::world::{Robot, RobotId, Task, TaskId, World, WorldError};

/// Task rejection sampling gives up after this many draws per task.
const MAX_TASK_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("robots {0} and {1} overlap")]
    OverlappingRobots(RobotId, RobotId),
    #[error("could not place {count} tasks at least {spacing} m apart")]
    TaskPlacement { count: usize, spacing: f64 },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    Grid,
    Line,
}

impl LayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::Grid => "grid",
            LayoutKind::Line => "line",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RobotLayout {
    /// Row-major grid centred on the layout centre.
    Grid {
        rows: usize,
        cols: usize,
        spacing: f64,
    },
    /// Horizontal line centred on the layout centre.
    Line {
        count: usize,
        spacing: f64,
    },
    Explicit {
        positions: Vec<Vec2>,
    },
}

impl RobotLayout {
    /// Square-ish grid holding `count` robots, or a line.
    pub fn for_kind(kind: LayoutKind, count: usize, spacing: f64) -> Self {
        match kind {
            LayoutKind::Grid => {
                let cols = (count as f64).sqrt().ceil().max(1.0) as usize;
                RobotLayout::Grid { rows: count.div_ceil(cols), cols, spacing }
            }
            LayoutKind::Line => RobotLayout::Line { count, spacing },
        }
    }

    fn positions(&self, center: Vec2) -> Vec<Vec2> {
        match self {
            RobotLayout::Grid { rows, cols, spacing } => {
                let x0 = -(*cols as f64 - 1.0) * spacing / 2.0;
                let y0 = -(*rows as f64 - 1.0) * spacing / 2.0;
                (0..*rows)
                    .flat_map(|r| (0..*cols).map(move |c| (r, c)))
                    .map(|(r, c)| center + Vec2::new(x0 + c as f64 * spacing, y0 + r as f64 * spacing))
                    .collect()
            }
            RobotLayout::Line { count, spacing } => {
                let x0 = -(*count as f64 - 1.0) * spacing / 2.0;
                (0..*count).map(|k| center + Vec2::new(x0 + k as f64 * spacing, 0.0)).collect()
            }
            RobotLayout::Explicit { positions } => positions.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSampler {
    Normal { count: usize, center: Vec2, sigma_x: f64, sigma_y: f64 },
    Explicit { locations: Vec<Vec2> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub layout: RobotLayout,
    pub layout_center: Vec2,
    pub tasks: TaskSampler,
    pub task_value: f64,
    pub task_discount: f64,
    /// Robots closer than this are rejected as overlapping.
    pub min_robot_spacing: f64,
    /// Sampled tasks closer than this are redrawn.
    pub min_task_spacing: f64,
}

impl WorldSpec {
    pub fn build(&self, rng: &mut impl Rng) -> Result<World, ScenarioError> {
        let positions = self.layout.positions(self.layout_center);
        for (i, a) in positions.iter().enumerate() {
            if !a.is_finite() {
                return Err(ScenarioError::Spec(format!("robot {i} has a non-finite position")));
            }
            for (j, b) in positions.iter().enumerate().skip(i + 1) {
                if a.distance(*b) < self.min_robot_spacing {
                    return Err(ScenarioError::OverlappingRobots(RobotId(i as u32), RobotId(j as u32)));
                }
            }
        }
        let robots =
            positions.into_iter().enumerate().map(|(i, position)| Robot { id: RobotId(i as u32), position }).collect();

        let locations = match &self.tasks {
            TaskSampler::Explicit { locations } => locations.clone(),
            TaskSampler::Normal { count, center, sigma_x, sigma_y } => {
                let bad = |s: f64| !(s > 0.0 && s.is_finite());
                if bad(*sigma_x) || bad(*sigma_y) {
                    return Err(ScenarioError::Spec("task sigma must be positive".into()));
                }
                let nx = Normal::new(center.x, *sigma_x).expect("validated sigma");
                let ny = Normal::new(center.y, *sigma_y).expect("validated sigma");
                let mut out: Vec<Vec2> = Vec::with_capacity(*count);
                let mut draws = 0;
                while out.len() < *count {
                    draws += 1;
                    if draws > MAX_TASK_DRAWS * count {
                        return Err(ScenarioError::TaskPlacement { count: *count, spacing: self.min_task_spacing });
                    }
                    let p = Vec2::new(nx.sample(rng), ny.sample(rng));
                    if out.iter().all(|q| q.distance(p) >= self.min_task_spacing) {
                        out.push(p);
                    }
                }
                out
            }
        };
        let tasks = locations
            .into_iter()
            .enumerate()
            .map(|(i, p)| Task::new(TaskId(i as u32), p, self.task_value, self.task_discount))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(World::new(robots, tasks)?)
    }
}

/// Generator for the small random instances used to check the objective
/// bound: robots uniform in a square arena, tasks normally distributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub instances: usize,
    pub robots_min: usize,
    pub robots_max: usize,
    pub safety_distance: f64,
    pub speed: f64,
    pub arena_center: Vec2,
    pub arena_half_width: f64,
    pub task_center: Vec2,
    pub task_sigma: f64,
    pub task_value: f64,
    pub task_discount: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            instances: 500,
            robots_min: 2,
            robots_max: 7,
            safety_distance: 0.5,
            speed: 1.0,
            arena_center: Vec2::new(0.0, -25.0),
            arena_half_width: 5.0,
            task_center: Vec2::ZERO,
            task_sigma: 10.0,
            task_value: 100.0,
            task_discount: 0.95,
        }
    }
}

impl BoundConfig {
    fn validate(&self) -> Result<(), ScenarioError> {
        if self.robots_min == 0 || self.robots_min > self.robots_max {
            return Err(ScenarioError::Spec("need 1 <= robots_min <= robots_max".into()));
        }
        if !(self.arena_half_width > 0.0 && self.task_sigma > 0.0) {
            return Err(ScenarioError::Spec("arena_half_width and task_sigma must be positive".into()));
        }
        Ok(())
    }

    /// Instance `index`, with as many tasks as robots.
    pub fn instance(&self, master_seed: u64, index: u64) -> Result<World, ScenarioError> {
        self.validate()?;
        let mut rng = trial_rng(master_seed, index);
        let n = rng.random_range(self.robots_min..=self.robots_max);
        let h = self.arena_half_width;
        let robots = (0..n)
            .map(|i| Robot {
                id: RobotId(i as u32),
                position: self.arena_center + Vec2::new(rng.random_range(-h..h), rng.random_range(-h..h)),
            })
            .collect();
        let normal = Normal::new(0.0, self.task_sigma).expect("validated sigma");
        let tasks = (0..n)
            .map(|i| {
                let p = self.task_center + Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng));
                Task::new(TaskId(i as u32), p, self.task_value, self.task_discount)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(World::new(robots, tasks)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub instance: u64,
    pub robots: usize,
    pub tasks: usize,
    pub optimal_value: f64,
    pub cata_value: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub instances: usize,
    pub min_ratio: f64,
    pub mean_ratio: f64,
    /// Instances whose ratio fell below one half.
    pub violations: Vec<u64>,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `cata >= optimum / 2` on `config.instances` random instances.
pub fn verify_bound(config: &BoundConfig, master_seed: u64) -> Result<BoundReport, ScenarioError> {
    verify_bound_using(config, master_seed, evaluate_objective)
}

/// As [`verify_bound`], scoring CATA's assignment with `evaluate`.
pub fn verify_bound_using<F>(config: &BoundConfig, master_seed: u64, evaluate: F) -> Result<BoundReport, ScenarioError>
where
    F: Fn(&AssignmentSet, &World, f64, f64) -> Result<f64, RewardError> + Sync,
{
    config.validate()?;
    let rows = (0..config.instances as u64)
        .into_par_iter()
        .map(|index| {
            let world = config.instance(master_seed, index)?;
            let report = compare_with_cata_using(&world, config.safety_distance, config.speed, &evaluate)?;
            Ok(BoundRow {
                instance: index,
                robots: world.num_robots(),
                tasks: world.num_tasks(),
                optimal_value: report.optimal_value,
                cata_value: report.cata_value,
                ratio: report.ratio,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let mean_ratio = rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len().max(1) as f64;
    let violations = rows.iter().filter(|r| r.ratio < 0.5 - RATIO_SLACK).map(|r| r.instance).collect();
    Ok(BoundReport { instances: rows.len(), min_ratio, mean_ratio, violations, rows })
}

/// Independent stream `index` of the master seed.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub layout: LayoutKind,
    pub robots: usize,
}

impl CellSpec {
    pub fn label(&self) -> String {
        format!("{}-{}", self.layout.name(), self.robots)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub cells: Vec<CellSpec>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub robot_spacing: f64,
    /// Centre of the robot formation; tasks are centred on the origin.
    pub layout_center: Vec2,
    pub task_sigma: f64,
    pub min_task_spacing: f64,
    pub auction: AuctionConfig,
    pub sim: SimConfig,
}

impl Default for BatchConfig {
    fn default() -> Self {
        let cells = [LayoutKind::Grid, LayoutKind::Line]
            .into_iter()
            .flat_map(|layout| [9, 25].map(|robots| CellSpec { layout, robots }))
            .collect();
        Self {
            cells,
            trials: 100,
            algorithms: vec![Algorithm::Cata, Algorithm::Cbaa],
            robot_spacing: 2.5,
            layout_center: Vec2::new(0.0, -25.0),
            task_sigma: 10.0,
            min_task_spacing: 0.5,
            auction: AuctionConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl BatchConfig {
    pub fn world_spec(&self, cell: &CellSpec) -> WorldSpec {
        WorldSpec {
            layout: RobotLayout::for_kind(cell.layout, cell.robots, self.robot_spacing),
            layout_center: self.layout_center,
            tasks: TaskSampler::Normal {
                count: cell.robots,
                center: Vec2::ZERO,
                sigma_x: self.task_sigma,
                sigma_y: self.task_sigma,
            },
            task_value: self.auction.default_value,
            task_discount: self.auction.default_discount,
            min_robot_spacing: self.sim.safety_zone_radius,
            min_task_spacing: self.effective_task_spacing(),
        }
    }

    /// Two parked robots closer than a safety zone (plus arrival slack)
    /// would lock each other out, so tasks are never sampled that close.
    pub fn effective_task_spacing(&self) -> f64 {
        self.min_task_spacing.max(self.sim.safety_zone_radius + 2.0 * self.sim.arrival_threshold)
    }

    /// Every (cell, trial) pair in run order.
    pub fn trial_keys(&self) -> Vec<TrialKey> {
        (0..self.cells.len()).flat_map(|cell| (0..self.trials).map(move |trial| TrialKey { cell, trial })).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.cells.iter().any(|c| c.robots == 0) {
            return Err(ScenarioError::Spec("cells need at least one robot".into()));
        }
        if self.algorithms.is_empty() {
            return Err(ScenarioError::Spec("no algorithms selected".into()));
        }
        self.auction.validate()?;
        self.sim.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub cell: usize,
    pub trial: usize,
}

/// One algorithm's run on one trial world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub cell: String,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub robots: usize,
    pub assigned: usize,
    pub rounds_used: usize,
    pub objective: f64,
    pub auction_timeout: bool,
    pub deadlock: bool,
    pub avoidance: u32,
    pub maintain_one: u32,
    pub maintain_multi: u32,
    pub completion_steps: usize,
    pub min_separation: f64,
}

/// Runs every configured algorithm on the world of `key`.
pub fn run_batch_trial(config: &BatchConfig, master_seed: u64, key: TrialKey) -> Result<Vec<TrialRow>, ScenarioError> {
    let cell = config.cells.get(key.cell).ok_or_else(|| ScenarioError::Spec(format!("no cell {}", key.cell)))?;
    let stream = (key.cell * config.trials + key.trial) as u64;
    let world = config.world_spec(cell).build(&mut trial_rng(master_seed, stream))?;
    let mut rows = Vec::with_capacity(config.algorithms.len());
    for &algorithm in &config.algorithms {
        let (result, auction_timeout) = match run_auction(&world, &config.auction, algorithm) {
            Ok(r) => (r, false),
            Err(AuctionError::Timeout { partial, .. }) => (*partial, true),
            Err(e) => return Err(e.into()),
        };
        let mut row = TrialRow {
            cell: cell.label(),
            trial: key.trial,
            algorithm,
            robots: cell.robots,
            assigned: result.assignments.len(),
            rounds_used: result.rounds_used,
            objective: result.objective_value,
            auction_timeout,
            deadlock: true,
            avoidance: 0,
            maintain_one: 0,
            maintain_multi: 0,
            completion_steps: 0,
            min_separation: f64::NAN,
        };
        if !auction_timeout {
            let m = run_trial(&world, &result.assignments, &config.sim)?;
            row.deadlock = m.deadlock;
            row.avoidance = m.avoidance_count;
            row.maintain_one = m.maintain_one_count;
            row.maintain_multi = m.maintain_multi_count;
            row.completion_steps = m.completion_steps;
            row.min_separation = m.min_separation_observed;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs `keys` in parallel; rows come back in key order.
pub fn run_batch_keys(
    config: &BatchConfig,
    master_seed: u64,
    keys: &[TrialKey],
) -> Result<Vec<TrialRow>, ScenarioError> {
    config.validate()?;
    let per_key =
        keys.par_iter().map(|&key| run_batch_trial(config, master_seed, key)).collect::<Result<Vec<_>, _>>()?;
    Ok(per_key.into_iter().flatten().collect())
}

pub fn run_batch(config: &BatchConfig, master_seed: u64) -> Result<Vec<TrialRow>, ScenarioError> {
    run_batch_keys(config, master_seed, &config.trial_keys())
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self { min: v[0], q1: at(0.25), median: at(0.5), q3: at(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub deadlocks: usize,
    pub auction_timeouts: usize,
    pub avoidance: Option<Quartiles>,
    pub maintain_one: Option<Quartiles>,
    pub maintain_multi: Option<Quartiles>,
    /// Over trials that finished without deadlock.
    pub completion_steps: Option<Quartiles>,
}

impl CellSummary {
    pub fn deadlock_rate(&self) -> f64 {
        self.deadlocks as f64 / self.trials.max(1) as f64
    }
}

/// Groups rows by (cell, algorithm) in first-appearance order.
pub fn summarize(rows: &[TrialRow]) -> Vec<CellSummary> {
    let mut groups: Vec<((String, Algorithm), Vec<&TrialRow>)> = Vec::new();
    for row in rows {
        let key = (row.cell.clone(), row.algorithm);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|((cell, algorithm), g)| {
            let simulated: Vec<&&TrialRow> = g.iter().filter(|r| !r.auction_timeout).collect();
            let stat = |f: fn(&TrialRow) -> f64| Quartiles::of(&simulated.iter().map(|r| f(r)).collect::<Vec<_>>());
            let finished: Vec<f64> = g.iter().filter(|r| !r.deadlock).map(|r| r.completion_steps as f64).collect();
            CellSummary {
                cell,
                algorithm,
                trials: g.len(),
                deadlocks: g.iter().filter(|r| r.deadlock).count(),
                auction_timeouts: g.iter().filter(|r| r.auction_timeout).count(),
                avoidance: stat(|r| r.avoidance as f64),
                maintain_one: stat(|r| r.maintain_one as f64),
                maintain_multi: stat(|r| r.maintain_multi as f64),
                completion_steps: Quartiles::of(&finished),
            }
        })
        .collect()
}
