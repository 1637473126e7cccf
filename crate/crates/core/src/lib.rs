//! Collision-aware task assignment for multi-robot teams.
//!
//! Robots bid for tasks with time-discounted rewards that are zeroed whenever
//! the straight path to a task falls inside the collision cone of a robot that
//! has already won a task. Bids are reconciled through a shared key/value
//! store, and a receding safety distance keeps the auction from stalling on
//! robots parked at their tasks. The crate also ships a consensus-auction
//! baseline, a centralized greedy equivalent, an exhaustive optimum for small
//! instances, and a kinematic simulator that counts collision incidents during
//! execution.

pub mod auction;
pub mod geometry;
pub mod oracle;
pub mod rewards;
pub mod scenarios;
pub mod sim;
pub mod stigmergy;
pub mod world;

pub use auction::{run_cata, run_cbaa, run_greedy_centralized, Algorithm, AuctionConfig, AuctionResult};
pub use geometry::Vec2;
pub use stigmergy::{AssignmentSet, BidTuple};
pub use world::{Robot, RobotId, Task, TaskId, World};
