use rand::Rng;

use super::Agent;
use crate::rng::StreamRng;

/// Uniformly random actions.
pub struct RandomAgent {
    num_actions: usize,
    rng: StreamRng,
}

impl RandomAgent {
    pub fn new(num_actions: usize, rng: StreamRng) -> Self {
        assert!(num_actions > 0, "need at least one action");
        Self { num_actions, rng }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &'static str {
        "random"
    }

    fn act(&mut self, _state: usize) -> usize {
        self.rng.random_range(0..self.num_actions)
    }

    fn observe(&mut self, _reward: f64, _next_state: usize) {}

    fn threshold(&self) -> Option<f64> {
        None
    }

    fn logdet(&self) -> Option<f64> {
        None
    }
}
