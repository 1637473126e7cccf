//! Robots, tasks and the world snapshot the auctions bid over.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("task {0}: inherent value must be positive and finite, got {1}")]
    TaskValue(TaskId, f64),
    #[error("task {0}: discount must lie in (0, 1], got {1}")]
    TaskDiscount(TaskId, f64),
    #[error("{0}: non-finite location")]
    Location(String),
    #[error("duplicate robot id {0}")]
    DuplicateRobot(RobotId),
    #[error("duplicate task id {0}")]
    DuplicateTask(TaskId),
    #[error("unknown robot id {0}")]
    UnknownRobot(RobotId),
    #[error("unknown task id {0}")]
    UnknownTask(TaskId),
}

/// A task `t_l` at location `T_l` with inherent value `V_l` and discount `λ_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub location: Vec2,
    pub inherent_value: f64,
    pub discount: f64,
}

impl Task {
    pub fn new(id: TaskId, location: Vec2, inherent_value: f64, discount: f64) -> Result<Self, WorldError> {
        let task = Self { id, location, inherent_value, discount };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !self.location.is_finite() {
            return Err(WorldError::Location(self.id.to_string()));
        }
        if !(self.inherent_value > 0.0 && self.inherent_value.is_finite()) {
            return Err(WorldError::TaskValue(self.id, self.inherent_value));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(WorldError::TaskDiscount(self.id, self.discount));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub id: RobotId,
    pub position: Vec2,
}

/// Robot start positions and task table. Both are kept sorted by id so every
/// iteration over the world is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldParts", into = "WorldParts")]
pub struct World {
    robots: Vec<Robot>,
    tasks: Vec<Task>,
    robot_index: BTreeMap<RobotId, usize>,
    task_index: BTreeMap<TaskId, usize>,
}

#[derive(Serialize, Deserialize)]
struct WorldParts {
    robots: Vec<Robot>,
    tasks: Vec<Task>,
}

impl TryFrom<WorldParts> for World {
    type Error = WorldError;
    fn try_from(parts: WorldParts) -> Result<Self, Self::Error> {
        World::new(parts.robots, parts.tasks)
    }
}

impl From<World> for WorldParts {
    fn from(world: World) -> Self {
        WorldParts { robots: world.robots, tasks: world.tasks }
    }
}

impl World {
    pub fn new(mut robots: Vec<Robot>, mut tasks: Vec<Task>) -> Result<Self, WorldError> {
        robots.sort_by_key(|r| r.id);
        tasks.sort_by_key(|t| t.id);
        let mut robot_index = BTreeMap::new();
        for (i, robot) in robots.iter().enumerate() {
            if !robot.position.is_finite() {
                return Err(WorldError::Location(robot.id.to_string()));
            }
            if robot_index.insert(robot.id, i).is_some() {
                return Err(WorldError::DuplicateRobot(robot.id));
            }
        }
        let mut task_index = BTreeMap::new();
        for (i, task) in tasks.iter().enumerate() {
            task.validate()?;
            if task_index.insert(task.id, i).is_some() {
                return Err(WorldError::DuplicateTask(task.id));
            }
        }
        Ok(Self { robots, tasks, robot_index, task_index })
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn robot(&self, id: RobotId) -> Option<&Robot> {
        self.robot_index.get(&id).map(|&i| &self.robots[i])
    }

    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.task_index.get(&id).map(|&i| &self.tasks[i])
    }

    pub fn robot_position(&self, id: RobotId) -> Option<Vec2> {
        self.robot(id).map(|r| r.position)
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Largest distance between any two robot start positions, 0 for fewer than two robots.
    pub fn max_robot_spacing(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.robots.iter().enumerate() {
            for b in &self.robots[i + 1..] {
                best = best.max(a.position.distance(b.position));
            }
        }
        best
    }

    /// Smallest distance between any two robot start positions, infinite for fewer than two.
    pub fn min_robot_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.robots.iter().enumerate() {
            for b in &self.robots[i + 1..] {
                best = best.min(a.position.distance(b.position));
            }
        }
        best
    }
}
