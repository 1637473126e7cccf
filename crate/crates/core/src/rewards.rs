//! Local rewards: time-discounted task score and its collision-aware shaping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_cone, relative_velocity_in_cone, GeometryError, Vec2};
use crate::stigmergy::AssignmentSet;
use crate::world::{RobotId, Task, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("speed must be positive and finite, got {0}")]
    Speed(f64),
    #[error("base reward must be non-negative, got {0}")]
    NegativeBase(f64),
    #[error("robot {0} is not in the world")]
    UnknownRobot(RobotId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Binary collision status `W_il` of a robot-task pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CollisionFlag {
    Clear = 0,
    Blocked = 1,
}

impl CollisionFlag {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn is_blocked(self) -> bool {
        self == CollisionFlag::Blocked
    }
}

/// `λ^τ · V` with `τ` the straight-line travel time at `speed`.
pub fn time_discounted_reward(robot_pos: Vec2, task: &Task, speed: f64) -> Result<f64, RewardError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(RewardError::Speed(speed));
    }
    let travel_time = robot_pos.distance(task.location) / speed;
    Ok(task.discount.powf(travel_time) * task.inherent_value)
}

/// Unit heading from `from` to `to`; zero when already there.
pub fn intended_velocity(from: Vec2, to: Vec2) -> Vec2 {
    (to - from).unit_or_zero()
}

/// Checks the candidate's straight path against every other robot that
/// already holds a task. Unassigned robots are ignored, as is the robot
/// itself.
pub fn collision_flag(
    world: &World,
    robot: RobotId,
    candidate: &Task,
    assignments: &AssignmentSet,
    safety_distance: f64,
) -> Result<CollisionFlag, RewardError> {
    let r_i = world.robot_position(robot).ok_or(RewardError::UnknownRobot(robot))?;
    let v_i = intended_velocity(r_i, candidate.location);
    for (other, held) in assignments.iter() {
        if other == robot {
            continue;
        }
        let (Some(r_q), Some(task_q)) = (world.robot_position(other), world.task(held)) else {
            continue;
        };
        let v_q = intended_velocity(r_q, task_q.location);
        let cone = build_cone(r_i, r_q, safety_distance)?;
        if relative_velocity_in_cone(&cone, v_i, v_q) {
            return Ok(CollisionFlag::Blocked);
        }
    }
    Ok(CollisionFlag::Clear)
}

/// `(1 - W) · b`.
pub fn shaped_bid(base: f64, flag: CollisionFlag) -> Result<f64, RewardError> {
    if base.is_nan() || base < 0.0 {
        return Err(RewardError::NegativeBase(base));
    }
    Ok(match flag {
        CollisionFlag::Clear => base,
        CollisionFlag::Blocked => 0.0,
    })
}
