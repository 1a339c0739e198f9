//! Feature reinforcement learning: choosing a state abstraction `Φ` for a
//! history-based agent by minimizing a code length, then planning in the
//! induced MDP.

pub mod coding;
pub mod features;
pub mod histories;
pub mod mdpcore;
pub mod planner;
pub mod environments;
pub mod search;
pub mod agent;
