//! Kinematic execution of an assignment with reactive local avoidance.
//!
//! Robots are holonomic points that fly straight at their task at
//! `max_speed`. Every step, each moving robot inspects the neighbours within
//! its sensing radius and applies two rules:
//!
//! * **Maneuver**: the robot's nominal velocity, taken relative to a
//!   neighbour's last velocity, lies inside that neighbour's collision cone
//!   (built at the safety-zone radius). The robot rotates its velocity by the
//!   smallest angle that clears every sensed cone, or stops if none does.
//!   For a neighbour already inside the zone the cone is the half-plane of
//!   approaching directions, which is the limit of the cone as the distance
//!   shrinks to the radius.
//! * **Maintenance**: a neighbour is inside the safety zone but not being
//!   approached. The robot adds a push away from it, proportional to the
//!   penetration depth.
//!
//! Updates are simultaneous: every robot reads the previous step's snapshot.
//! Robots that arrive stop for good but stay in everyone's neighbour checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_cone, Cone, Vec2};
use crate::stigmergy::AssignmentSet;
use crate::world::{RobotId, TaskId, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid sim config: {0}")]
    Config(String),
    #[error("assignment references unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("assignment references unknown task {0}")]
    UnknownTask(TaskId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Seconds per step.
    pub time_step: f64,
    pub max_speed: f64,
    /// Physical radius; the safety zone must cover two of them.
    pub robot_radius: f64,
    pub safety_zone_radius: f64,
    /// Non-threatening neighbours closer than this trigger maintenance.
    /// Larger than the safety zone, so robots are kept apart before they
    /// come near each other's cones.
    pub maintenance_radius: f64,
    /// Neighbours farther than this are ignored.
    pub sensing_radius: f64,
    /// Repulsive speed per meter of safety-zone penetration, 1/s.
    pub repulsion_gain: f64,
    pub arrival_threshold: f64,
    pub max_steps: usize,
    /// Steps without any robot improving its best distance-to-goal before a
    /// deadlock is declared.
    pub stagnation_window: usize,
    /// Minimum improvement that counts as progress, meters.
    pub progress_tolerance: f64,
    /// Angular resolution of the escape-direction search, degrees.
    pub rotation_step_deg: f64,
    /// Inactive steps an incident episode survives before it closes.
    pub episode_bridge_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            time_step: 0.1,
            max_speed: 1.0,
            robot_radius: 0.25,
            safety_zone_radius: 0.5,
            maintenance_radius: 1.5,
            sensing_radius: 3.0,
            repulsion_gain: 1.0,
            arrival_threshold: 0.1,
            max_steps: 5000,
            stagnation_window: 200,
            progress_tolerance: 0.01,
            rotation_step_deg: 1.0,
            episode_bridge_steps: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("time_step", self.time_step),
            ("max_speed", self.max_speed),
            ("robot_radius", self.robot_radius),
            ("safety_zone_radius", self.safety_zone_radius),
            ("maintenance_radius", self.maintenance_radius),
            ("sensing_radius", self.sensing_radius),
            ("arrival_threshold", self.arrival_threshold),
            ("progress_tolerance", self.progress_tolerance),
            ("rotation_step_deg", self.rotation_step_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.repulsion_gain >= 0.0 && self.repulsion_gain.is_finite()) {
            return Err(SimError::Config(format!("repulsion_gain must be non-negative, got {}", self.repulsion_gain)));
        }
        if self.max_steps == 0 || self.stagnation_window == 0 {
            return Err(SimError::Config("max_steps and stagnation_window must be positive".into()));
        }
        if self.safety_zone_radius < 2.0 * self.robot_radius {
            return Err(SimError::Config("safety_zone_radius must be at least twice robot_radius".into()));
        }
        if self.maintenance_radius < self.safety_zone_radius {
            return Err(SimError::Config("maintenance_radius must be at least safety_zone_radius".into()));
        }
        if self.sensing_radius < self.maintenance_radius {
            return Err(SimError::Config("sensing_radius must be at least maintenance_radius".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub position: Vec2,
    pub velocity: Vec2,
    pub assigned_task: Option<TaskId>,
    pub goal: Option<Vec2>,
    pub arrived: bool,
    pub radius: f64,
}

impl RobotState {
    pub fn is_moving(&self) -> bool {
        self.goal.is_some() && !self.arrived
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadlockReason {
    Stagnation,
    StepCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub avoidance_count: u32,
    pub maintain_one_count: u32,
    pub maintain_multi_count: u32,
    pub deadlock: bool,
    pub deadlock_reason: Option<DeadlockReason>,
    pub completion_steps: usize,
    pub min_separation_observed: f64,
    pub arrived: usize,
    pub assigned: usize,
}

/// What one robot sees of a neighbour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborView {
    pub id: RobotId,
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AvoidanceOutcome {
    pub velocity: Vec2,
    /// Neighbours whose cone the nominal velocity entered.
    pub maneuver: Vec<RobotId>,
    /// Neighbours inside the safety zone but outside the cone.
    pub maintain: Vec<RobotId>,
}

/// Whether `velocity` of a robot at `position` heads into `neighbor`'s cone
/// and would reach its safety zone within `horizon` seconds.
fn threatens(position: Vec2, velocity: Vec2, neighbor: &NeighborView, zone: f64, horizon: f64) -> bool {
    let relative = velocity - neighbor.velocity;
    let separation = neighbor.position - position;
    match build_cone(position, neighbor.position, zone) {
        Ok(Cone::Proper(cone)) => {
            if !cone.contains(relative) {
                return false;
            }
            // Inside the cone the ray hits the zone boundary; first entry time.
            let a = relative.norm_squared();
            let b = separation.dot(relative);
            let c = separation.norm_squared() - zone * zone;
            let entry = (b - (b * b - a * c).max(0.0).sqrt()) / a;
            entry < horizon
        }
        // Inside the zone: the cone has opened to the approaching half-plane.
        Ok(Cone::Degenerate) => relative.dot(separation) > 0.0,
        Err(_) => false,
    }
}

/// Adjusts `nominal` for the neighbours in view.
/// Threats further away than `horizon` seconds (the robot's own remaining
/// travel time) are ignored: the robot will have stopped before reaching them.
pub fn reactive_avoidance(
    position: Vec2,
    nominal: Vec2,
    horizon: f64,
    neighbors: &[NeighborView],
    config: &SimConfig,
) -> AvoidanceOutcome {
    let zone = config.safety_zone_radius;
    let keep = config.maintenance_radius;
    let mut out = AvoidanceOutcome::default();
    for n in neighbors {
        if threatens(position, nominal, n, zone, horizon) {
            out.maneuver.push(n.id);
        } else if position.distance(n.position) < keep {
            out.maintain.push(n.id);
        }
    }

    let mut velocity = nominal;
    if !out.maneuver.is_empty() {
        velocity = escape_direction(position, nominal, horizon, neighbors, config).unwrap_or(Vec2::ZERO);
    }
    // Repulsion acts on every zone intrusion, including ones being maneuvered
    // around, so a robot that had to stop is still pushed clear.
    for n in neighbors {
        let away = position - n.position;
        let d = away.norm();
        if d > 0.0 && d < keep {
            velocity += away / d * (config.repulsion_gain * (keep - d));
        }
    }
    out.velocity = velocity.clamp_norm(config.max_speed);
    out
}

/// Smallest rotation of `nominal` that threatens no neighbour. Equal
/// clockwise and counterclockwise rotations resolve clockwise.
fn escape_direction(
    position: Vec2,
    nominal: Vec2,
    horizon: f64,
    neighbors: &[NeighborView],
    config: &SimConfig,
) -> Option<Vec2> {
    let step = config.rotation_step_deg.to_radians();
    let max_k = (std::f64::consts::PI / step).ceil() as usize;
    let clear = |v: Vec2| !neighbors.iter().any(|n| threatens(position, v, n, config.safety_zone_radius, horizon));
    for k in 1..=max_k {
        let theta = (k as f64 * step).min(std::f64::consts::PI);
        for candidate in [nominal.rotated(-theta), nominal.rotated(theta)] {
            if clear(candidate) {
                return Some(candidate);
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EpisodeKey {
    Avoidance(RobotId, RobotId),
    MaintainOne(RobotId),
    MaintainMulti(RobotId),
}

/// Counts contiguous activity intervals per key; gaps up to `bridge`
/// inactive steps do not split an episode.
#[derive(Debug, Clone, Default)]
struct EpisodeTracker {
    last_active: BTreeMap<EpisodeKey, usize>,
}

impl EpisodeTracker {
    /// Marks `key` active at `step`; returns true when this opens a new episode.
    fn touch(&mut self, key: EpisodeKey, step: usize, bridge: usize) -> bool {
        let fresh = match self.last_active.get(&key) {
            Some(&last) => step - last > bridge + 1,
            None => true,
        };
        self.last_active.insert(key, step);
        fresh
    }
}

/// Per-robot record of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    #[serde(rename = "robot_id")]
    pub robot: RobotId,
    pub x: f64,
    pub y: f64,
    /// Velocity applied during the step.
    pub vx: f64,
    pub vy: f64,
    pub arrived: bool,
    pub maneuver: bool,
    pub maintain_neighbors: u32,
}

pub struct Simulation {
    config: SimConfig,
    robots: Vec<RobotState>,
    step: usize,
    episodes: EpisodeTracker,
    best_distance: Vec<f64>,
    last_progress_step: usize,
    metrics: TrialMetrics,
    finished: bool,
}

impl Simulation {
    pub fn new(world: &World, assignments: &AssignmentSet, config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        for (robot, task) in assignments.iter() {
            if world.robot(robot).is_none() {
                return Err(SimError::UnknownRobot(robot));
            }
            if world.task(task).is_none() {
                return Err(SimError::UnknownTask(task));
            }
        }
        let robots: Vec<RobotState> = world
            .robots()
            .iter()
            .map(|r| {
                let task = assignments.task_of(r.id);
                let goal = task.and_then(|t| world.task(t)).map(|t| t.location);
                let arrived = goal.is_some_and(|g| r.position.distance(g) <= config.arrival_threshold);
                RobotState {
                    id: r.id,
                    position: r.position,
                    velocity: Vec2::ZERO,
                    assigned_task: task,
                    goal,
                    arrived,
                    radius: config.robot_radius,
                }
            })
            .collect();
        let best_distance = robots.iter().map(|r| r.goal.map_or(0.0, |g| r.position.distance(g))).collect();
        let mut sim = Self {
            config: config.clone(),
            metrics: TrialMetrics {
                avoidance_count: 0,
                maintain_one_count: 0,
                maintain_multi_count: 0,
                deadlock: false,
                deadlock_reason: None,
                completion_steps: 0,
                min_separation_observed: f64::INFINITY,
                arrived: 0,
                assigned: assignments.len(),
            },
            robots,
            step: 0,
            episodes: EpisodeTracker::default(),
            best_distance,
            last_progress_step: 0,
            finished: false,
        };
        sim.observe_separation();
        sim.metrics.arrived = sim.robots.iter().filter(|r| r.goal.is_some() && r.arrived).count();
        sim.finished = sim.all_arrived();
        Ok(sim)
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn metrics(&self) -> &TrialMetrics {
        &self.metrics
    }

    fn all_arrived(&self) -> bool {
        self.robots.iter().all(|r| !r.is_moving())
    }

    fn observe_separation(&mut self) {
        for (i, a) in self.robots.iter().enumerate() {
            for b in &self.robots[i + 1..] {
                let d = a.position.distance(b.position);
                if d < self.metrics.min_separation_observed {
                    self.metrics.min_separation_observed = d;
                }
            }
        }
    }

    fn neighbors_of(&self, i: usize) -> Vec<NeighborView> {
        let me = &self.robots[i];
        self.robots
            .iter()
            .enumerate()
            .filter(|&(j, r)| j != i && me.position.distance(r.position) <= self.config.sensing_radius)
            .map(|(_, r)| NeighborView { id: r.id, position: r.position, velocity: r.velocity })
            .collect()
    }

    /// Advances one step. Returns per-robot trace rows for the step.
    pub fn step(&mut self) -> Vec<TraceRow> {
        if self.finished {
            return Vec::new();
        }
        self.step += 1;
        let step = self.step;
        let dt = self.config.time_step;
        let bridge = self.config.episode_bridge_steps;

        let mut plans = Vec::with_capacity(self.robots.len());
        for (i, r) in self.robots.iter().enumerate() {
            let Some(goal) = r.goal.filter(|_| !r.arrived) else {
                plans.push(AvoidanceOutcome::default());
                continue;
            };
            let to_goal = goal - r.position;
            let remaining = to_goal.norm();
            let speed = self.config.max_speed.min(remaining / dt);
            let nominal = to_goal.unit_or_zero() * speed;
            // At least one step ahead, so the final creep is still checked.
            let horizon = (remaining / self.config.max_speed).max(dt);
            plans.push(reactive_avoidance(r.position, nominal, horizon, &self.neighbors_of(i), &self.config));
        }

        for (r, plan) in self.robots.iter().zip(&plans) {
            for &other in &plan.maneuver {
                let key = EpisodeKey::Avoidance(r.id.min(other), r.id.max(other));
                if self.episodes.touch(key, step, bridge) {
                    self.metrics.avoidance_count += 1;
                }
            }
            let key = match plan.maintain.len() {
                0 => None,
                1 => Some(EpisodeKey::MaintainOne(r.id)),
                _ => Some(EpisodeKey::MaintainMulti(r.id)),
            };
            if let Some(key) = key {
                if self.episodes.touch(key, step, bridge) {
                    match key {
                        EpisodeKey::MaintainOne(_) => self.metrics.maintain_one_count += 1,
                        _ => self.metrics.maintain_multi_count += 1,
                    }
                }
            }
        }

        let mut rows = Vec::with_capacity(self.robots.len());
        for (i, (r, plan)) in self.robots.iter_mut().zip(&plans).enumerate() {
            let applied = plan.velocity;
            r.position += applied * dt;
            r.velocity = applied;
            if let Some(goal) = r.goal.filter(|_| !r.arrived) {
                let d = r.position.distance(goal);
                if d <= self.config.arrival_threshold {
                    r.arrived = true;
                    r.velocity = Vec2::ZERO;
                    self.metrics.arrived += 1;
                }
                if d < self.best_distance[i] - self.config.progress_tolerance || r.arrived {
                    self.best_distance[i] = d;
                    self.last_progress_step = step;
                }
            }
            rows.push(TraceRow {
                step,
                robot: r.id,
                x: r.position.x,
                y: r.position.y,
                vx: applied.x,
                vy: applied.y,
                arrived: r.arrived,
                maneuver: !plan.maneuver.is_empty(),
                maintain_neighbors: plan.maintain.len() as u32,
            });
        }
        self.observe_separation();

        if self.all_arrived() {
            self.finished = true;
        } else if step - self.last_progress_step >= self.config.stagnation_window {
            self.finish_deadlock(DeadlockReason::Stagnation);
        } else if step >= self.config.max_steps {
            self.finish_deadlock(DeadlockReason::StepCap);
        }
        self.metrics.completion_steps = step;
        rows
    }

    fn finish_deadlock(&mut self, reason: DeadlockReason) {
        self.finished = true;
        self.metrics.deadlock = true;
        self.metrics.deadlock_reason = Some(reason);
    }

    /// Runs to completion or deadlock.
    pub fn run(mut self) -> TrialMetrics {
        while !self.finished {
            self.step();
        }
        self.metrics
    }
}

pub fn run_trial(world: &World, assignments: &AssignmentSet, config: &SimConfig) -> Result<TrialMetrics, SimError> {
    Ok(Simulation::new(world, assignments, config)?.run())
}

/// Final state of a traced trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedTrial {
    pub metrics: TrialMetrics,
    pub rows: Vec<TraceRow>,
    pub final_states: Vec<RobotState>,
}

pub fn run_trial_traced(
    world: &World,
    assignments: &AssignmentSet,
    config: &SimConfig,
) -> Result<TracedTrial, SimError> {
    let mut sim = Simulation::new(world, assignments, config)?;
    let mut rows = Vec::new();
    while !sim.is_finished() {
        rows.extend(sim.step());
    }
    Ok(TracedTrial { metrics: sim.metrics.clone(), rows, final_states: sim.robots.clone() })
}
