//! Single-assignment auctions over a [`World`].
//!
//! Every auction runs in synchronous rounds and commits exactly one winner per
//! non-stalled round. Three variants share the round loop and the receding
//! collision horizon:
//!
//! * **CATA**: each unassigned robot submits its best collision-shaped bid
//!   through the stigmergy store, and the highest bid wins.
//! * **CBAA**: the same protocol, but the bids are time-discounted rewards
//!   with no collision shaping.
//! * **Greedy**: a centralized scan over every unassigned (robot, task) pair.
//!   Under full connectivity it picks the same winner as CATA in every round.
//!
//! When every submitted bid is exactly zero, the round stalls. The safety
//! distance then shrinks geometrically toward its floor. A stall at the floor
//! ends the auction with the remaining robots unassigned.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{collision_flag, shaped_bid, time_discounted_reward, CollisionFlag, RewardError};
use crate::stigmergy::{AssignmentSet, BidTuple, StigmergyError, StigmergyStore};
use crate::world::{RobotId, TaskId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cata,
    Cbaa,
    Greedy,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cata => "cata",
            Algorithm::Cbaa => "cbaa",
            Algorithm::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cata" => Ok(Algorithm::Cata),
            "cbaa" => Ok(Algorithm::Cbaa),
            "greedy" => Ok(Algorithm::Greedy),
            other => Err(format!("unknown algorithm `{other}` (expected cata, cbaa or greedy)")),
        }
    }
}

/// Bid shaping applied by each robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidPolicy {
    CollisionAware,
    TimeDiscountedOnly,
}

/// Starting safety distance of the receding horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyStart {
    /// Largest pairwise distance between robot start positions (never below the floor).
    MaxRobotSpacing,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundLimit {
    PerTask(usize),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuctionConfig {
    pub safety_distance_initial: SafetyStart,
    pub safety_distance_min: f64,
    pub horizon_decay: f64,
    pub max_rounds: RoundLimit,
    /// Discount applied to generated tasks that carry no override.
    pub default_discount: f64,
    /// Inherent value applied to generated tasks that carry no override.
    pub default_value: f64,
    /// Nominal robot speed used for travel-time estimates, m/s.
    pub speed: f64,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        Self {
            safety_distance_initial: SafetyStart::MaxRobotSpacing,
            safety_distance_min: 0.5,
            horizon_decay: 0.8,
            max_rounds: RoundLimit::PerTask(50),
            default_discount: 0.95,
            default_value: 100.0,
            speed: 1.0,
        }
    }
}

impl AuctionConfig {
    /// Fixed safety distance with the horizon disabled.
    pub fn fixed_distance(d: f64) -> Self {
        Self { safety_distance_initial: SafetyStart::Fixed(d), safety_distance_min: d, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AuctionError> {
        let bad = |msg: String| Err(AuctionError::Config(msg));
        if !(self.safety_distance_min > 0.0 && self.safety_distance_min.is_finite()) {
            return bad(format!("safety_distance_min must be positive, got {}", self.safety_distance_min));
        }
        if let SafetyStart::Fixed(d0) = self.safety_distance_initial {
            if !(d0.is_finite() && d0 >= self.safety_distance_min) {
                return bad(format!("safety_distance_initial {d0} must be >= safety_distance_min"));
            }
        }
        if !(self.horizon_decay > 0.0 && self.horizon_decay < 1.0) {
            return bad(format!("horizon_decay must lie in (0, 1), got {}", self.horizon_decay));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be positive, got {}", self.speed));
        }
        if !(self.default_value > 0.0 && self.default_value.is_finite()) {
            return bad(format!("default_value must be positive, got {}", self.default_value));
        }
        if !(self.default_discount > 0.0 && self.default_discount <= 1.0) {
            return bad(format!("default_discount must lie in (0, 1], got {}", self.default_discount));
        }
        match self.max_rounds {
            RoundLimit::PerTask(0) | RoundLimit::Fixed(0) => bad("max_rounds must be positive".into()),
            _ => Ok(()),
        }
    }

    pub fn initial_safety_distance(&self, world: &World) -> f64 {
        match self.safety_distance_initial {
            SafetyStart::MaxRobotSpacing => world.max_robot_spacing().max(self.safety_distance_min),
            SafetyStart::Fixed(d) => d,
        }
    }

    pub fn round_limit(&self, world: &World) -> usize {
        match self.max_rounds {
            RoundLimit::PerTask(k) => k * world.num_tasks().max(1),
            RoundLimit::Fixed(k) => k,
        }
    }
}

/// One committed winner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinRecord {
    pub round: usize,
    pub robot: RobotId,
    pub task: TaskId,
    pub bid: f64,
    pub safety_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionResult {
    pub algorithm: Algorithm,
    pub assignments: AssignmentSet,
    pub rounds_used: usize,
    /// Sum of the winning bids, each evaluated when it won.
    pub objective_value: f64,
    /// Safety distance in force during each round.
    pub horizon_trace: Vec<f64>,
    pub winners: Vec<WinRecord>,
    /// True when `min(N_R, N_T)` pairs were assigned.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuctionError {
    #[error("invalid auction config: {0}")]
    Config(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("auction protocol violation: {0}")]
    Protocol(#[from] StigmergyError),
    #[error("auction exceeded {limit} rounds with {} of {target} pairs assigned", partial.assignments.len())]
    Timeout { limit: usize, target: usize, partial: Box<AuctionResult> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundOutcome {
    Assigned(BidTuple),
    Stalled,
}

fn unassigned_tasks<'a>(
    world: &'a World,
    assignments: &'a AssignmentSet,
) -> impl Iterator<Item = &'a crate::world::Task> {
    world.tasks().iter().filter(|t| !assignments.contains_task(t.id))
}

fn pair_bid(
    world: &World,
    robot: RobotId,
    task: &crate::world::Task,
    assignments: &AssignmentSet,
    safety_distance: f64,
    policy: BidPolicy,
    speed: f64,
) -> Result<f64, RewardError> {
    let pos = world.robot_position(robot).ok_or(RewardError::UnknownRobot(robot))?;
    let base = time_discounted_reward(pos, task, speed)?;
    let flag = match policy {
        BidPolicy::CollisionAware => collision_flag(world, robot, task, assignments, safety_distance)?,
        BidPolicy::TimeDiscountedOnly => CollisionFlag::Clear,
    };
    shaped_bid(base, flag)
}

/// Best bid of one unassigned robot over all unassigned tasks, ties to the
/// lower task id. `None` when no task is left.
pub fn local_highest_bid(
    world: &World,
    robot: RobotId,
    assignments: &AssignmentSet,
    safety_distance: f64,
    policy: BidPolicy,
    speed: f64,
) -> Result<Option<BidTuple>, RewardError> {
    let mut best: Option<BidTuple> = None;
    for task in unassigned_tasks(world, assignments) {
        let bid = pair_bid(world, robot, task, assignments, safety_distance, policy, speed)?;
        if best.is_none_or(|b| bid > b.bid) {
            best = Some(BidTuple { robot, bid, task: task.id });
        }
    }
    Ok(best)
}

/// One auction round through the stigmergy store.
pub fn cata_round(
    world: &World,
    store: &mut StigmergyStore,
    safety_distance: f64,
    policy: BidPolicy,
    speed: f64,
) -> Result<RoundOutcome, AuctionError> {
    store.begin_round();
    let assignments = store.read_assignments().clone();
    let bids = world
        .robots()
        .iter()
        .filter(|r| !assignments.contains_robot(r.id))
        .map(|r| local_highest_bid(world, r.id, &assignments, safety_distance, policy, speed))
        .collect::<Result<Vec<_>, _>>()?;
    for bid in bids.into_iter().flatten() {
        store.put_bid(bid);
    }
    match store.global_bid() {
        Some(winner) if winner.bid > 0.0 => {
            store.commit_winner(&winner)?;
            Ok(RoundOutcome::Assigned(winner))
        }
        _ => Ok(RoundOutcome::Stalled),
    }
}

/// One centralized greedy step: the best shaped bid over all unassigned
/// pairs given the prior assignments.
pub fn greedy_round(
    world: &World,
    assignments: &mut AssignmentSet,
    safety_distance: f64,
    speed: f64,
) -> Result<RoundOutcome, AuctionError> {
    let mut best: Option<BidTuple> = None;
    for robot in world.robots().iter().filter(|r| !assignments.contains_robot(r.id)) {
        for task in unassigned_tasks(world, assignments) {
            let bid = pair_bid(world, robot.id, task, assignments, safety_distance, BidPolicy::CollisionAware, speed)?;
            // Robots and tasks are visited in ascending id order, so a strict
            // comparison keeps the lowest ids among equal bids.
            if best.is_none_or(|b| bid > b.bid) {
                best = Some(BidTuple { robot: robot.id, bid, task: task.id });
            }
        }
    }
    match best {
        Some(winner) if winner.bid > 0.0 => {
            assignments.insert(winner.robot, winner.task)?;
            Ok(RoundOutcome::Assigned(winner))
        }
        _ => Ok(RoundOutcome::Stalled),
    }
}

/// Receding collision horizon: `D <- max(D_min, γ D)` on every stall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    current: f64,
    floor: f64,
    decay: f64,
}

impl Horizon {
    pub fn new(initial: f64, floor: f64, decay: f64) -> Self {
        Self { current: initial.max(floor), floor, decay }
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn at_floor(&self) -> bool {
        self.current <= self.floor
    }

    /// Shrinks the distance; returns false if it was already at the floor.
    pub fn recede(&mut self) -> bool {
        if self.at_floor() {
            return false;
        }
        self.current = (self.current * self.decay).max(self.floor);
        true
    }
}

enum Engine {
    Stigmergy { store: StigmergyStore, policy: BidPolicy },
    Central { assignments: AssignmentSet },
}

impl Engine {
    fn assignments(&self) -> &AssignmentSet {
        match self {
            Engine::Stigmergy { store, .. } => store.read_assignments(),
            Engine::Central { assignments } => assignments,
        }
    }

    fn play(&mut self, world: &World, d: f64, speed: f64) -> Result<RoundOutcome, AuctionError> {
        match self {
            Engine::Stigmergy { store, policy } => cata_round(world, store, d, *policy, speed),
            Engine::Central { assignments } => greedy_round(world, assignments, d, speed),
        }
    }
}

pub fn run_auction(world: &World, config: &AuctionConfig, algorithm: Algorithm) -> Result<AuctionResult, AuctionError> {
    config.validate()?;
    let mut engine = match algorithm {
        Algorithm::Cata => Engine::Stigmergy { store: StigmergyStore::new(), policy: BidPolicy::CollisionAware },
        Algorithm::Cbaa => Engine::Stigmergy { store: StigmergyStore::new(), policy: BidPolicy::TimeDiscountedOnly },
        Algorithm::Greedy => Engine::Central { assignments: AssignmentSet::new() },
    };
    let target = world.num_robots().min(world.num_tasks());
    let limit = config.round_limit(world);
    let mut horizon =
        Horizon::new(config.initial_safety_distance(world), config.safety_distance_min, config.horizon_decay);
    let mut result = AuctionResult {
        algorithm,
        assignments: AssignmentSet::new(),
        rounds_used: 0,
        objective_value: 0.0,
        horizon_trace: Vec::new(),
        winners: Vec::new(),
        complete: false,
    };

    loop {
        if engine.assignments().len() >= target {
            result.complete = true;
            break;
        }
        if result.rounds_used >= limit {
            result.assignments = engine.assignments().clone();
            return Err(AuctionError::Timeout { limit, target, partial: Box::new(result) });
        }
        result.rounds_used += 1;
        let d = horizon.current();
        result.horizon_trace.push(d);
        match engine.play(world, d, config.speed)? {
            RoundOutcome::Assigned(win) => {
                result.objective_value += win.bid;
                result.winners.push(WinRecord {
                    round: result.rounds_used,
                    robot: win.robot,
                    task: win.task,
                    bid: win.bid,
                    safety_distance: d,
                });
            }
            RoundOutcome::Stalled => {
                if !horizon.recede() {
                    break;
                }
            }
        }
    }
    result.assignments = engine.assignments().clone();
    Ok(result)
}

pub fn run_cata(world: &World, config: &AuctionConfig) -> Result<AuctionResult, AuctionError> {
    run_auction(world, config, Algorithm::Cata)
}

pub fn run_cbaa(world: &World, config: &AuctionConfig) -> Result<AuctionResult, AuctionError> {
    run_auction(world, config, Algorithm::Cbaa)
}

pub fn run_greedy_centralized(world: &World, config: &AuctionConfig) -> Result<AuctionResult, AuctionError> {
    run_auction(world, config, Algorithm::Greedy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{min_future_separation, Vec2};
    use crate::world::{Robot, Task};

    fn world(robots: &[(f64, f64)], tasks: &[(f64, f64)]) -> World {
        World::new(
            robots
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Robot { id: RobotId(i as u32), position: Vec2::new(x, y) })
                .collect(),
            tasks
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Task::new(TaskId(i as u32), Vec2::new(x, y), 100.0, 0.95).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_pair_bid_is_discounted_reward() {
        let w = world(&[(0.0, 0.0)], &[(3.0, 4.0)]);
        let bid = local_highest_bid(&w, RobotId(0), &AssignmentSet::new(), 1.0, BidPolicy::CollisionAware, 1.0)
            .unwrap()
            .unwrap();
        assert_eq!(bid.task, TaskId(0));
        assert!((bid.bid - 0.95f64.powi(5) * 100.0).abs() < 1e-9);
    }

    #[test]
    fn fully_blocked_robot_submits_zero() {
        // Robot 1 sits within D of robot 0, so every cone is degenerate.
        let w = world(&[(0.0, 0.0), (0.5, 0.0)], &[(5.0, 0.0), (0.0, 5.0), (-5.0, 0.0)]);
        let a = AssignmentSet::from_pairs([(RobotId(1), TaskId(0))]).unwrap();
        let bid = local_highest_bid(&w, RobotId(0), &a, 1.0, BidPolicy::CollisionAware, 1.0).unwrap().unwrap();
        assert_eq!(bid.bid, 0.0);
        assert_eq!(bid.task, TaskId(1));
    }

    #[test]
    fn robot_avoids_crossing_task() {
        // Robot 1 at (4,0) holds t0 at (-4,0). For robot 0 at the origin, t1 is
        // nearer but lies on the head-on line; t2 is farther and clear.
        let w = world(&[(0.0, 0.0), (4.0, 0.0)], &[(-4.0, 0.0), (2.0, 0.2), (-3.0, -2.0)]);
        let a = AssignmentSet::from_pairs([(RobotId(1), TaskId(0))]).unwrap();

        let v1 = Vec2::new(-1.0, 0.0);
        let toward_near = Vec2::new(2.0, 0.2).unit_or_zero();
        let toward_far = Vec2::new(-3.0, -2.0).unit_or_zero();
        assert!(min_future_separation(Vec2::ZERO, toward_near, Vec2::new(4.0, 0.0), v1) < 1.0);
        assert!(min_future_separation(Vec2::ZERO, toward_far, Vec2::new(4.0, 0.0), v1) > 1.0);

        let bid = local_highest_bid(&w, RobotId(0), &a, 1.0, BidPolicy::CollisionAware, 1.0).unwrap().unwrap();
        assert_eq!(bid.task, TaskId(2));
        let plain = local_highest_bid(&w, RobotId(0), &a, 1.0, BidPolicy::TimeDiscountedOnly, 1.0).unwrap().unwrap();
        assert_eq!(plain.task, TaskId(1));
    }

    #[test]
    fn rounds_assign_in_descending_bid_order() {
        let w = world(&[(0.0, 0.0), (10.0, 0.0)], &[(0.0, 3.0), (10.0, 1.0)]);
        let mut store = StigmergyStore::new();
        let first = cata_round(&w, &mut store, 0.5, BidPolicy::CollisionAware, 1.0).unwrap();
        assert_eq!(first, RoundOutcome::Assigned(BidTuple { robot: RobotId(1), bid: 95.0, task: TaskId(1) }));
        let second = cata_round(&w, &mut store, 0.5, BidPolicy::CollisionAware, 1.0).unwrap();
        match second {
            RoundOutcome::Assigned(b) => assert_eq!((b.robot, b.task), (RobotId(0), TaskId(0))),
            RoundOutcome::Stalled => panic!("unexpected stall"),
        }
        assert_eq!(store.read_assignments().len(), 2);
    }

    #[test]
    fn all_zero_bids_stall() {
        let w = world(&[(0.0, 0.0), (0.5, 0.0)], &[(5.0, 0.0), (-5.0, 0.0)]);
        let mut store = StigmergyStore::new();
        store.commit_winner(&BidTuple { robot: RobotId(1), bid: 1.0, task: TaskId(0) }).unwrap();
        let out = cata_round(&w, &mut store, 1.0, BidPolicy::CollisionAware, 1.0).unwrap();
        assert_eq!(out, RoundOutcome::Stalled);
        assert_eq!(store.read_assignments().len(), 1);
    }

    #[test]
    fn single_robot_single_round() {
        let w = world(&[(0.0, 0.0)], &[(1.0, 0.0)]);
        for algo in [Algorithm::Cata, Algorithm::Cbaa, Algorithm::Greedy] {
            let r = run_auction(&w, &AuctionConfig::default(), algo).unwrap();
            assert_eq!(r.rounds_used, 1);
            assert!(r.complete);
            assert_eq!(r.assignments.task_of(RobotId(0)), Some(TaskId(0)));
        }
    }

    #[test]
    fn stall_then_recede_completes() {
        // Robots 1 m apart heading the same way: at D = 3 the second robot is
        // inside the safety disk and stalls until D drops below 1.
        let w = world(&[(0.0, 0.0), (1.0, 0.0)], &[(0.0, 10.0), (1.0, 10.0)]);
        let cfg = AuctionConfig {
            safety_distance_initial: SafetyStart::Fixed(3.0),
            safety_distance_min: 0.5,
            ..AuctionConfig::default()
        };
        let r = run_cata(&w, &cfg).unwrap();
        assert!(r.complete);
        assert!(r.horizon_trace.windows(2).any(|p| p[1] < p[0]));
        assert!(r.horizon_trace.windows(2).all(|p| p[1] <= p[0]));
        assert!(r.horizon_trace.iter().all(|&d| d >= 0.5));
        // 3.0 -> 2.4 -> 1.92 -> 1.536 -> 1.2288 -> 0.98304 (first distance below 1)
        assert!((r.horizon_trace.last().unwrap() - 3.0 * 0.8f64.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn stall_at_floor_terminates_incomplete() {
        let w = world(&[(0.0, 0.0), (0.3, 0.0)], &[(0.0, 10.0), (1.0, 10.0)]);
        let r = run_cata(&w, &AuctionConfig::fixed_distance(0.5)).unwrap();
        assert!(!r.complete);
        assert_eq!(r.assignments.len(), 1);
        assert_eq!(r.rounds_used, 2);
    }

    #[test]
    fn cbaa_matches_cata_without_cones() {
        let w = world(&[(0.0, 0.0), (0.0, 5.0), (0.0, 10.0)], &[(20.0, 0.0), (20.0, 5.0), (20.0, 10.0)]);
        let cfg = AuctionConfig::fixed_distance(0.5);
        let a = run_cata(&w, &cfg).unwrap();
        let b = run_cbaa(&w, &cfg).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.objective_value, b.objective_value);
    }

    #[test]
    fn empty_task_set_gives_empty_result() {
        let w = world(&[(0.0, 0.0)], &[]);
        let r = run_greedy_centralized(&w, &AuctionConfig::default()).unwrap();
        assert!(r.assignments.is_empty());
        assert_eq!(r.rounds_used, 0);
        assert!(r.complete);
    }

    #[test]
    fn round_limit_reports_partial_result() {
        let w = world(&[(0.0, 0.0), (5.0, 0.0)], &[(0.0, 5.0), (5.0, 5.0)]);
        let cfg = AuctionConfig { max_rounds: RoundLimit::Fixed(1), ..AuctionConfig::fixed_distance(0.5) };
        match run_cata(&w, &cfg) {
            Err(AuctionError::Timeout { limit, target, partial }) => {
                assert_eq!((limit, target), (1, 2));
                assert_eq!(partial.assignments.len(), 1);
            }
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let cfg = AuctionConfig { horizon_decay: 1.0, ..AuctionConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = AuctionConfig { safety_distance_initial: SafetyStart::Fixed(0.1), ..AuctionConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(AuctionConfig::default().validate().is_ok());
    }

    #[test]
    fn config_json_shape() {
        let json = serde_json::to_value(AuctionConfig::default()).unwrap();
        assert_eq!(json["safety_distance_initial"], "max_robot_spacing");
        assert_eq!(json["max_rounds"]["per_task"], 50);
        let cfg: AuctionConfig = serde_json::from_str(r#"{"safety_distance_initial":{"fixed":2.0}}"#).unwrap();
        assert_eq!(cfg.safety_distance_initial, SafetyStart::Fixed(2.0));
        assert_eq!(cfg.horizon_decay, 0.8);
    }
}
