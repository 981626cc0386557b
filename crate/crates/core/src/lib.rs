//! Task-oriented chart sequencing.
//!
//! A chart design space is modeled as a deterministic graph MDP. Per-task
//! reward weights are learned from demonstration trajectories with
//! maximum-entropy inverse reinforcement learning, mixed with perception
//! costs, and solved with value iteration to recommend next edits and rank
//! chart sequences.

pub mod config;
pub mod demonstrations;
pub mod design_space;
pub mod evaluation;
pub mod irl;
pub mod model;
pub mod planner;
pub mod reward;
