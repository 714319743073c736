//! Learning agents.
//!
//! * [`DcAgent`]: clipped least-squares value iteration that refits every
//!   step and clips each new `Q̃` against the two previous generations, with
//!   thresholds taken only over visited states.
//! * [`BaselineAgent`]: the episodic variant that refits when `det Λ` doubles
//!   and clips with the minimum over the whole state space.
//! * [`TabularAgent`]: the episodic variant for tabular models with count
//!   based estimates and threshold clipping but no deviation control.
//! * [`RandomAgent`]: uniform actions, the linear-regret reference.

mod baseline;
mod config;
mod dc;
pub mod generation;
mod random;
mod tabular;

pub use baseline::BaselineAgent;
pub use config::{auto_gamma, theory_beta, AgentConfig};
pub use dc::{DcAgent, DcStats, DcVariant};
pub use generation::{Chain, DeviationClip, Generation, QParts};
pub use random::RandomAgent;
pub use tabular::{TabularAgent, TabularPlan, TabularVariant};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("the tabular agent needs one-hot features")]
    NotTabular,
}

/// The plan / act / observe cycle shared by every agent.
pub trait Agent {
    fn name(&self) -> &'static str;
    /// Plans for the current step if needed and returns the action for `state`.
    fn act(&mut self, state: usize) -> usize;
    /// Records the reward and next state that followed the last action.
    fn observe(&mut self, reward: f64, next_state: usize);
    /// Current clipping threshold `m_t`, if the agent keeps one.
    fn threshold(&self) -> Option<f64>;
    /// `log det` of the current covariance, if the agent keeps one.
    fn logdet(&self) -> Option<f64>;
}

/// `argmax` over a slice, ties to the lowest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
