//! Communication-constrained multi-agent multi-goal path planning.
//!
//! A fleet of agents must visit an ordered sequence of goal vertices on a
//! weighted directed graph while staying communication-connected (directly or
//! through relays) at all times and never sharing a vertex. The solver works
//! epoch by epoch (one epoch per goal) in two stages:
//!
//! 1. [`stage1`] picks a leader for the goal, orders the followers along the
//!    communication tree and runs witness-validated reachability searches that
//!    yield, per agent, the set of places it could be when the epoch ends.
//! 2. [`stage2`] turns those sets into per-agent heuristic fields and runs a
//!    greedy best-first search in the composite space of all agents.
//!
//! [`plan::validate_plan`] checks any plan independently and [`oracle`] gives
//! optimal reference plans for tiny instances.

pub mod bench;
pub mod cli;
pub mod comms;
pub mod graph;
pub mod io;
pub mod map_io;
pub mod oracle;
pub mod plan;
pub mod render;
pub mod scenario;
pub mod solver;
pub mod stage1;
pub mod stage2;
pub mod timing;
