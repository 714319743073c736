use std::sync::Arc;

use super::generation::{qtilde_formula, value_clip};
use super::{argmax, Agent, AgentConfig, AgentError};
use crate::envs::FeatureMap;
use crate::estimator::{combine_solved, GroupedMoments};
use crate::mathcore::{dot, weighted_norm, PsdMatrixState};

/// Episodic clipped value iteration with the threshold taken over all states.
///
/// Value iteration is rerun only when `log det Λ` has grown by more than
/// `ln 2` since the start of the episode; between refits the stored
/// `Q_u` are reused. Before the first refit every `Q` is `1/(1−γ)`.
pub struct BaselineAgent {
    cfg: AgentConfig,
    features: Arc<dyn FeatureMap + Send + Sync>,
    num_states: usize,
    cov: PsdMatrixState,
    moments: GroupedMoments,
    s1: Option<usize>,
    t: usize,
    state: usize,
    action: usize,
    episode_logdet: f64,
    episode_start: usize,
    episodes: usize,
    /// `q[(u − episode_start)·S·A + s·A + a]`, empty before the first refit.
    q: Vec<f64>,
    /// `min_s Ṽ_u(s)` for `u ≥ episode_start`.
    mins: Vec<f64>,
    potential_sum: f64,
}

impl BaselineAgent {
    pub fn new(
        features: Arc<dyn FeatureMap + Send + Sync>,
        num_states: usize,
        cfg: AgentConfig,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        if num_states == 0 {
            return Err(AgentError::Config("the baseline agent needs an enumerable state space".into()));
        }
        let cov = PsdMatrixState::new(features.dim(), cfg.lambda);
        Ok(Self {
            episode_logdet: cov.logdet(),
            moments: GroupedMoments::new(features.dim()),
            cov,
            features,
            num_states,
            cfg,
            s1: None,
            t: 0,
            state: 0,
            action: 0,
            episode_start: 1,
            episodes: 1,
            q: Vec::new(),
            mins: Vec::new(),
            potential_sum: 0.0,
        })
    }

    /// Number of episodes started so far, including the first.
    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn episode_start(&self) -> usize {
        self.episode_start
    }

    pub fn covariance(&self) -> &PsdMatrixState {
        &self.cov
    }

    pub fn potential_sum(&self) -> f64 {
        self.potential_sum
    }

    /// `Q^t_u(s,a)` as currently stored.
    pub fn q_value(&self, u: usize, s: usize, a: usize) -> f64 {
        if self.q.is_empty() {
            return self.cfg.cap();
        }
        assert!(u >= self.episode_start && u <= self.cfg.horizon, "u = {u} outside the stored range");
        let na = self.features.num_actions();
        self.q[((u - self.episode_start) * self.num_states + s) * na + a]
    }

    fn refit(&mut self, start: usize) {
        let fm = self.features.as_ref();
        let (ns, na, d) = (self.num_states, fm.num_actions(), fm.dim());
        let horizon = self.cfg.horizon;
        let (gamma, beta, h, cap) = (self.cfg.gamma, self.cfg.beta, self.cfg.h, self.cfg.cap());
        let s1 = self.s1.expect("initial state recorded");
        let inv = self.cov.inv();
        let z = self.moments.solved(inv);
        let norms: Vec<f64> =
            (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| weighted_norm(inv, fm.feature(s, a))).collect();
        let len = horizon - start + 1;
        let mut q = vec![0.0; len * ns * na];
        let mut mins = vec![0.0; len];
        let mut v_next = vec![cap; ns];
        let mut vals = vec![0.0; self.moments.states().len()];
        let mut vtilde = vec![0.0; ns];
        for u in (start..=horizon).rev() {
            let anchor = v_next[s1];
            for (v, &s) in vals.iter_mut().zip(self.moments.states()) {
                *v = v_next[s];
            }
            let w = combine_solved(&z, &vals, anchor, d);
            let base = (u - start) * ns * na;
            for s in 0..ns {
                for a in 0..na {
                    let phi = fm.feature(s, a);
                    q[base + s * na + a] =
                        qtilde_formula(fm.reward(s, a), gamma, dot(phi, &w) + anchor, beta, norms[s * na + a], cap);
                }
                vtilde[s] = q[base + s * na..base + (s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            let floor = vtilde.iter().copied().fold(f64::INFINITY, f64::min);
            mins[u - start] = floor;
            for s in 0..ns {
                v_next[s] = value_clip(vtilde[s], floor, h);
            }
        }
        self.q = q;
        self.mins = mins;
    }
}

impl Agent for BaselineAgent {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn act(&mut self, state: usize) -> usize {
        assert!(self.t < self.cfg.horizon, "act called after the horizon");
        self.t += 1;
        if self.t == 1 {
            self.s1 = Some(state);
        }
        self.state = state;
        let na = self.features.num_actions();
        self.action = argmax((0..na).map(|a| self.q_value(self.t, state, a)));
        self.action
    }

    fn observe(&mut self, _reward: f64, next_state: usize) {
        let phi = self.features.feature(self.state, self.action).to_vec();
        self.potential_sum += self.cov.rank1_update(&phi);
        self.moments.push(&phi, next_state);
        if self.cov.logdet() - self.episode_logdet > std::f64::consts::LN_2 {
            self.episodes += 1;
            self.episode_logdet = self.cov.logdet();
            if self.t < self.cfg.horizon {
                self.episode_start = self.t + 1;
                self.refit(self.t + 1);
            }
        }
    }

    fn threshold(&self) -> Option<f64> {
        if self.mins.is_empty() || self.t < self.episode_start {
            None
        } else {
            Some(self.mins[self.t - self.episode_start])
        }
    }

    fn logdet(&self) -> Option<f64> {
        Some(self.cov.logdet())
    }
}
