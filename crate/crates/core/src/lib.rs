//! Optimistic value iteration with clipping for average-reward linear MDPs.
//!
//! The crate contains the environments, exact planners used as ground truth,
//! the learning agents, runtime checkers for the agents' invariants, and an
//! experiment harness that writes reproducible CSV traces.

pub mod mathcore;
pub mod rng;
pub mod envs;
pub mod oracle;
pub mod estimator;
pub mod agents;
pub mod verify;
pub mod harness;
