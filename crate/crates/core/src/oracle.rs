//! Exhaustive optimum of the collision-aware assignment objective for small
//! teams, used to measure how far an auction result is from optimal.
//!
//! The objective sums `(1 - W_il) · b_il` over the assigned pairs. Each flag
//! is checked jointly against every other pair in the same assignment. The
//! constraints allow robots to stay idle, so the search covers every partial
//! injective mapping and not only the full-size ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{run_cata, AuctionConfig, AuctionError};
use crate::geometry::{build_cone, relative_velocity_in_cone};
use crate::rewards::{collision_flag, intended_velocity, shaped_bid, time_discounted_reward, RewardError};
use crate::stigmergy::AssignmentSet;
use crate::world::World;

/// Largest `min(N_R, N_T)` the enumeration accepts.
pub const MAX_ORACLE_SIZE: usize = 8;
/// Upper bound on the number of enumerated assignments.
pub const MAX_ENUMERATION: u128 = 50_000_000;

/// Slack allowed on `ratio <= 1`.
pub const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(
        "instance too large for exhaustive search: min(N_R, N_T) = {size} exceeds {MAX_ORACLE_SIZE}; use a smaller N"
    )]
    TooLarge { size: usize },
    #[error("instance too large for exhaustive search: {count} assignments exceed {MAX_ENUMERATION}; use a smaller N")]
    TooManyAssignments { count: u128 },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
}

/// Objective of a complete assignment with every flag checked jointly.
pub fn evaluate_objective(
    assignment: &AssignmentSet,
    world: &World,
    safety_distance: f64,
    speed: f64,
) -> Result<f64, RewardError> {
    let mut total = 0.0;
    for (robot, task_id) in assignment.iter() {
        let task = world.task(task_id).expect("assignment references a task outside the world");
        let pos = world.robot_position(robot).ok_or(RewardError::UnknownRobot(robot))?;
        let base = time_discounted_reward(pos, task, speed)?;
        let flag = collision_flag(world, robot, task, assignment, safety_distance)?;
        total += shaped_bid(base, flag)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub value: f64,
    pub assignment: AssignmentSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    /// Optimal objective value (OOV).
    pub optimal_value: f64,
    pub optimal_assignment: AssignmentSet,
    /// CATA's assignment re-evaluated jointly.
    pub cata_value: f64,
    /// Sum of CATA's winning bids as they were won.
    pub cata_sequential: f64,
    pub cata_assignment: AssignmentSet,
    pub ratio: f64,
}

/// Number of partial injective robot→task mappings.
pub fn enumeration_size(n_robots: usize, n_tasks: usize) -> u128 {
    // Sum over k of C(n_robots, k) * n_tasks! / (n_tasks - k)!
    let mut total: u128 = 0;
    for k in 0..=n_robots.min(n_tasks) {
        let mut choose: u128 = 1;
        for i in 0..k {
            choose = choose * (n_robots - i) as u128 / (i + 1) as u128;
        }
        let perm: u128 = (0..k).map(|i| (n_tasks - i) as u128).product();
        total = total.saturating_add(choose.saturating_mul(perm));
    }
    total
}

/// Pairwise tables for the enumeration: base rewards and which pairs of
/// (robot, task) choices block each other.
struct Tables {
    n_tasks: usize,
    base: Vec<f64>,
    /// `conflict[(i * n_tasks + l) * stride + (q * n_tasks + m)]`
    conflict: Vec<bool>,
    stride: usize,
}

impl Tables {
    fn build(world: &World, safety_distance: f64, speed: f64) -> Result<Self, RewardError> {
        let robots = world.robots();
        let tasks = world.tasks();
        let n_tasks = tasks.len();
        let stride = robots.len() * n_tasks;
        let mut base = vec![0.0; stride];
        let mut heading = vec![crate::geometry::Vec2::ZERO; stride];
        for (i, r) in robots.iter().enumerate() {
            for (l, t) in tasks.iter().enumerate() {
                base[i * n_tasks + l] = time_discounted_reward(r.position, t, speed)?;
                heading[i * n_tasks + l] = intended_velocity(r.position, t.location);
            }
        }
        let mut conflict = vec![false; stride * stride];
        for i in 0..robots.len() {
            for q in 0..robots.len() {
                if q == i {
                    continue;
                }
                let cone =
                    build_cone(robots[i].position, robots[q].position, safety_distance).map_err(RewardError::from)?;
                for l in 0..n_tasks {
                    for m in 0..n_tasks {
                        if m == l {
                            continue;
                        }
                        let a = i * n_tasks + l;
                        let b = q * n_tasks + m;
                        conflict[a * stride + b] = relative_velocity_in_cone(&cone, heading[a], heading[b]);
                    }
                }
            }
        }
        Ok(Self { n_tasks, base, conflict, stride })
    }

    fn value(&self, chosen: &[(usize, usize)]) -> f64 {
        let mut total = 0.0;
        for (k, &(i, l)) in chosen.iter().enumerate() {
            let a = i * self.n_tasks + l;
            let blocked = chosen
                .iter()
                .enumerate()
                .any(|(j, &(q, m))| j != k && self.conflict[a * self.stride + q * self.n_tasks + m]);
            if !blocked {
                total += self.base[a];
            }
        }
        total
    }
}

#[derive(Clone)]
struct Best {
    value: f64,
    chosen: Vec<(usize, usize)>,
}

fn search(
    tables: &Tables,
    n_robots: usize,
    robot: usize,
    used: &mut Vec<bool>,
    chosen: &mut Vec<(usize, usize)>,
    best: &mut Best,
) {
    if robot == n_robots {
        let v = tables.value(chosen);
        if v > best.value {
            best.value = v;
            best.chosen.clone_from(chosen);
        }
        return;
    }
    // Idle first, then tasks in id order.
    search(tables, n_robots, robot + 1, used, chosen, best);
    for l in 0..tables.n_tasks {
        if used[l] {
            continue;
        }
        used[l] = true;
        chosen.push((robot, l));
        search(tables, n_robots, robot + 1, used, chosen, best);
        chosen.pop();
        used[l] = false;
    }
}

/// Maximum of [`evaluate_objective`] over every partial injective assignment.
/// Among equal values the first assignment in enumeration order is kept.
pub fn brute_force_optimum(world: &World, safety_distance: f64, speed: f64) -> Result<Optimum, OracleError> {
    let (n_robots, n_tasks) = (world.num_robots(), world.num_tasks());
    let size = n_robots.min(n_tasks);
    if size > MAX_ORACLE_SIZE {
        return Err(OracleError::TooLarge { size });
    }
    let count = enumeration_size(n_robots, n_tasks);
    if count > MAX_ENUMERATION {
        return Err(OracleError::TooManyAssignments { count });
    }
    let tables = Tables::build(world, safety_distance, speed)?;
    let empty = Best { value: 0.0, chosen: Vec::new() };

    let best = if n_robots == 0 {
        empty
    } else {
        // Split on the first robot's choice: idle, then each task.
        let branches: Vec<Option<usize>> = std::iter::once(None).chain((0..n_tasks).map(Some)).collect();
        branches
            .par_iter()
            .map(|first| {
                let mut used = vec![false; n_tasks];
                let mut chosen = Vec::with_capacity(size);
                if let Some(l) = *first {
                    used[l] = true;
                    chosen.push((0, l));
                }
                let mut best = Best { value: f64::NEG_INFINITY, chosen: Vec::new() };
                search(&tables, n_robots, 1, &mut used, &mut chosen, &mut best);
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(
                Best { value: f64::NEG_INFINITY, chosen: Vec::new() },
                |acc, b| if b.value > acc.value { b } else { acc },
            )
    };

    let robots = world.robots();
    let tasks = world.tasks();
    let assignment = AssignmentSet::from_pairs(best.chosen.iter().map(|&(i, l)| (robots[i].id, tasks[l].id)))
        .expect("enumeration only produces injective assignments");
    Ok(Optimum { value: best.value.max(0.0), assignment })
}

/// Runs CATA at a fixed safety distance and compares it with the optimum.
pub fn compare_with_cata(world: &World, safety_distance: f64, speed: f64) -> Result<ObjectiveReport, OracleError> {
    compare_with_cata_using(world, safety_distance, speed, evaluate_objective)
}

/// Same as [`compare_with_cata`] with a caller-supplied evaluator for CATA's
/// joint objective.
pub fn compare_with_cata_using<F>(
    world: &World,
    safety_distance: f64,
    speed: f64,
    evaluate: F,
) -> Result<ObjectiveReport, OracleError>
where
    F: Fn(&AssignmentSet, &World, f64, f64) -> Result<f64, RewardError>,
{
    let optimum = brute_force_optimum(world, safety_distance, speed)?;
    let config = AuctionConfig { speed, ..AuctionConfig::fixed_distance(safety_distance) };
    let cata = run_cata(world, &config)?;
    let cata_value = evaluate(&cata.assignments, world, safety_distance, speed)?;
    let ratio = if optimum.value > 0.0 { cata_value / optimum.value } else { 1.0 };
    Ok(ObjectiveReport {
        optimal_value: optimum.value,
        optimal_assignment: optimum.assignment,
        cata_value,
        cata_sequential: cata.objective_value,
        cata_assignment: cata.assignments,
        ratio,
    })
}
