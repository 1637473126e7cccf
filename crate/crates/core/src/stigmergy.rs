//! Simulated virtual stigmergy: a shared key/value memory where concurrent
//! writes to the global bid are resolved by keeping the higher bid.
//!
//! The store models a fully connected network with synchronous propagation,
//! so every robot reads the same state after each auction round.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{RobotId, TaskId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StigmergyError {
    #[error("robot {robot} already holds task {held}")]
    RobotAlreadyAssigned { robot: RobotId, held: TaskId },
    #[error("task {task} already held by robot {holder}")]
    TaskAlreadyAssigned { task: TaskId, holder: RobotId },
}

/// A robot's best bid `B_i = (r_i, b_max)`, carrying the task it bid on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidTuple {
    pub robot: RobotId,
    pub bid: f64,
    pub task: TaskId,
}

impl BidTuple {
    /// Conflict rule: higher bid wins, equal bids go to the lower robot id
    /// (then the lower task id, so the order is total).
    pub fn beats(&self, other: &BidTuple) -> bool {
        self.bid > other.bid || (self.bid == other.bid && (self.robot, self.task) < (other.robot, other.task))
    }
}

/// Injective robot ↔ task pairs, searchable from either side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentSet {
    by_robot: BTreeMap<RobotId, TaskId>,
    by_task: BTreeMap<TaskId, RobotId>,
}

impl AssignmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self, StigmergyError>
    where
        I: IntoIterator<Item = (RobotId, TaskId)>,
    {
        let mut set = Self::new();
        for (robot, task) in pairs {
            set.insert(robot, task)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, robot: RobotId, task: TaskId) -> Result<(), StigmergyError> {
        if let Some(&held) = self.by_robot.get(&robot) {
            return Err(StigmergyError::RobotAlreadyAssigned { robot, held });
        }
        if let Some(&holder) = self.by_task.get(&task) {
            return Err(StigmergyError::TaskAlreadyAssigned { task, holder });
        }
        self.by_robot.insert(robot, task);
        self.by_task.insert(task, robot);
        Ok(())
    }

    pub fn remove_robot(&mut self, robot: RobotId) -> Option<TaskId> {
        let task = self.by_robot.remove(&robot)?;
        self.by_task.remove(&task);
        Some(task)
    }

    pub fn task_of(&self, robot: RobotId) -> Option<TaskId> {
        self.by_robot.get(&robot).copied()
    }

    pub fn robot_of(&self, task: TaskId) -> Option<RobotId> {
        self.by_task.get(&task).copied()
    }

    pub fn contains_robot(&self, robot: RobotId) -> bool {
        self.by_robot.contains_key(&robot)
    }

    pub fn contains_task(&self, task: TaskId) -> bool {
        self.by_task.contains_key(&task)
    }

    pub fn len(&self) -> usize {
        self.by_robot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_robot.is_empty()
    }

    /// Pairs in ascending robot id order.
    pub fn iter(&self) -> impl Iterator<Item = (RobotId, TaskId)> + '_ {
        self.by_robot.iter().map(|(&r, &t)| (r, t))
    }

    pub fn is_subset_of(&self, other: &AssignmentSet) -> bool {
        self.iter().all(|(r, t)| other.task_of(r) == Some(t))
    }
}

impl Serialize for AssignmentSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for AssignmentSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(RobotId, TaskId)>::deserialize(deserializer)?;
        AssignmentSet::from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Key {
    GlobalBid,
    Assignment(RobotId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    /// Global bid slot cleared at the start of a round.
    Vacant,
    Bid(BidTuple),
    Task(TaskId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub value: Value,
    pub version: u64,
    pub writer: Option<RobotId>,
}

/// Shared memory of one trial. Versions only ever increase per key.
#[derive(Debug, Clone, Default)]
pub struct StigmergyStore {
    entries: BTreeMap<Key, Entry>,
    assignments: AssignmentSet,
}

impl StigmergyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, key: Key) -> Option<&Entry> {
        self.entries.get(&key)
    }

    fn write(&mut self, key: Key, value: Value, writer: Option<RobotId>) {
        let version = self.entries.get(&key).map_or(1, |e| e.version + 1);
        self.entries.insert(key, Entry { value, version, writer });
    }

    /// Clears the global bid slot for a new auction round.
    pub fn begin_round(&mut self) {
        self.write(Key::GlobalBid, Value::Vacant, None);
    }

    pub fn global_bid(&self) -> Option<BidTuple> {
        match self.entries.get(&Key::GlobalBid)?.value {
            Value::Bid(bid) => Some(bid),
            _ => None,
        }
    }

    /// Offers a bid for the global slot. Returns whether it was accepted.
    pub fn put_bid(&mut self, candidate: BidTuple) -> bool {
        let accept = match self.global_bid() {
            Some(current) => candidate.beats(&current),
            None => true,
        };
        if accept {
            self.write(Key::GlobalBid, Value::Bid(candidate), Some(candidate.robot));
        }
        accept
    }

    pub fn read_assignments(&self) -> &AssignmentSet {
        &self.assignments
    }

    /// Only the winning robot writes its own assignment entry.
    pub fn commit_winner(&mut self, winner: &BidTuple) -> Result<(), StigmergyError> {
        self.assignments.insert(winner.robot, winner.task)?;
        self.write(Key::Assignment(winner.robot), Value::Task(winner.task), Some(winner.robot));
        Ok(())
    }
}
