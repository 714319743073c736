use std::sync::Arc;

use serde::Serialize;

use super::generation::{qtilde_formula, value_clip};
use super::{argmax, Agent, AgentConfig, AgentError};
use crate::envs::{FeatureMap, LinearMdpModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TabularVariant {
    Faithful,
    /// Refits the counts every step instead of once per episode.
    RefitEveryStep,
}

/// Value tables of one planning pass.
#[derive(Clone, Debug)]
pub struct TabularPlan {
    pub step: usize,
    /// Episode index `k` in force at this step.
    pub episode: usize,
    pub threshold: f64,
    num_states: usize,
    /// `vtilde[(u − step)·S + s]` for `u ∈ [step, T]`.
    vtilde: Vec<f64>,
    v: Vec<f64>,
    /// `Q^t_t(s,a)` at `[s·A + a]`.
    q_now: Vec<f64>,
}

impl TabularPlan {
    pub fn vtilde(&self, u: usize, s: usize) -> f64 {
        self.vtilde[(u - self.step) * self.num_states + s]
    }

    pub fn v(&self, u: usize, s: usize) -> f64 {
        self.v[(u - self.step) * self.num_states + s]
    }

    pub fn last_u(&self) -> usize {
        self.step + self.vtilde.len() / self.num_states - 1
    }
}

/// Count-based clipped value iteration for one-hot models.
///
/// With `λ = 0` and a pseudo-inverse, the regression estimate is the
/// empirical transition kernel and the bonus is `β/√N(s,a)`. Pairs never
/// visited before the current episode take the value `1/(1−γ)`. The counts
/// used for planning are frozen at the start of each episode; a new episode
/// starts when `Σ ln(1 + N(s,a))`, the log-determinant of `I + Σ φφᵀ`, has
/// grown by more than `ln 2`.
pub struct TabularAgent {
    cfg: AgentConfig,
    variant: TabularVariant,
    num_states: usize,
    num_actions: usize,
    rewards: Vec<f64>,
    counts: Vec<u64>,
    counts3: Vec<u64>,
    frozen: Vec<u64>,
    frozen3: Vec<u64>,
    logpot: f64,
    frozen_logpot: f64,
    episode_start: usize,
    episodes: usize,
    t: usize,
    state: usize,
    action: usize,
    /// `thresholds[t − 1] = m_t`
    thresholds: Vec<f64>,
    plan: Option<Arc<TabularPlan>>,
}

impl TabularAgent {
    pub fn new(model: &LinearMdpModel, cfg: AgentConfig, variant: TabularVariant) -> Result<Self, AgentError> {
        cfg.validate()?;
        if !model.is_one_hot() {
            return Err(AgentError::NotTabular);
        }
        let (ns, na) = (model.num_states(), model.num_actions());
        let rewards = (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| model.reward(s, a)).collect();
        Ok(Self {
            cfg,
            variant,
            num_states: ns,
            num_actions: na,
            rewards,
            counts: vec![0; ns * na],
            counts3: vec![0; ns * na * ns],
            frozen: vec![0; ns * na],
            frozen3: vec![0; ns * na * ns],
            logpot: 0.0,
            frozen_logpot: 0.0,
            episode_start: 1,
            episodes: 1,
            t: 0,
            state: 0,
            action: 0,
            thresholds: vec![cfg.cap()],
            plan: None,
        })
    }

    pub fn plan(&self) -> Option<&Arc<TabularPlan>> {
        self.plan.as_ref()
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn episode_start(&self) -> usize {
        self.episode_start
    }

    /// `m_1, m_2, …`
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// `[P̂V](s,a)` under the frozen counts, `None` if `(s,a)` is unvisited.
    pub fn phat(&self, s: usize, a: usize, v: &[f64]) -> Option<f64> {
        let row = s * self.num_actions + a;
        let n = self.frozen[row];
        if n == 0 {
            return None;
        }
        let ns = self.num_states;
        let mut acc = 0.0;
        for (next, &c) in self.frozen3[row * ns..(row + 1) * ns].iter().enumerate() {
            if c > 0 {
                acc += c as f64 * v[next];
            }
        }
        Some(acc / n as f64)
    }

    fn build_plan(&self) -> TabularPlan {
        let t = self.t;
        let (ns, na) = (self.num_states, self.num_actions);
        let horizon = self.cfg.horizon;
        let (gamma, beta, h, cap) = (self.cfg.gamma, self.cfg.beta, self.cfg.h, self.cfg.cap());
        let m = self.thresholds[t - 1];
        let len = horizon - t + 1;
        let mut vtilde = vec![0.0; len * ns];
        let mut v = vec![0.0; len * ns];
        let mut v_next = vec![cap; ns];
        let mut q_now = vec![0.0; ns * na];
        let mut q_row = vec![0.0; na];
        for u in (t..=horizon).rev() {
            let k = u - t;
            for s in 0..ns {
                for a in 0..na {
                    let row = s * na + a;
                    q_row[a] = match self.phat(s, a, &v_next) {
                        None => cap,
                        Some(p) => {
                            let bonus = 1.0 / (self.frozen[row] as f64).sqrt();
                            qtilde_formula(self.rewards[row], gamma, p, beta, bonus, cap)
                        }
                    };
                }
                if u == t {
                    q_now[s * na..(s + 1) * na].copy_from_slice(&q_row);
                }
                let vt = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                vtilde[k * ns + s] = vt;
                v[k * ns + s] = value_clip(vt, m, h);
            }
            v_next.copy_from_slice(&v[k * ns..(k + 1) * ns]);
        }
        TabularPlan { step: t, episode: self.episodes, threshold: m, num_states: ns, vtilde, v, q_now }
    }

    fn freeze(&mut self) {
        self.frozen.copy_from_slice(&self.counts);
        self.frozen3.copy_from_slice(&self.counts3);
    }
}

impl Agent for TabularAgent {
    fn name(&self) -> &'static str {
        "tabular"
    }

    fn act(&mut self, state: usize) -> usize {
        assert!(self.t < self.cfg.horizon, "act called after the horizon");
        self.t += 1;
        self.state = state;
        let plan = self.build_plan();
        let na = self.num_actions;
        self.action = argmax(plan.q_now[state * na..(state + 1) * na].iter().copied());
        self.plan = Some(Arc::new(plan));
        self.action
    }

    fn observe(&mut self, _reward: f64, next_state: usize) {
        let row = self.state * self.num_actions + self.action;
        let n = self.counts[row] as f64;
        self.logpot += (n + 2.0).ln() - (n + 1.0).ln();
        self.counts[row] += 1;
        self.counts3[row * self.num_states + next_state] += 1;
        let m_t = self.thresholds[self.t - 1];
        let next = if self.t < self.cfg.horizon {
            let plan = self.plan.as_ref().expect("planned this step");
            plan.vtilde(self.t + 1, next_state).min(m_t)
        } else {
            m_t
        };
        self.thresholds.push(next);
        if self.logpot - self.frozen_logpot > std::f64::consts::LN_2 {
            self.episodes += 1;
            self.episode_start = self.t + 1;
            self.frozen_logpot = self.logpot;
            self.freeze();
        } else if self.variant == TabularVariant::RefitEveryStep {
            self.freeze();
        }
    }

    fn threshold(&self) -> Option<f64> {
        self.t.checked_sub(1).map(|i| self.thresholds[i])
    }

    fn logdet(&self) -> Option<f64> {
        Some(self.logpot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{embed_tabular, random_low_rank, TabularMdp};
    use crate::rng::{stream, Stream};

    fn deterministic() -> LinearMdpModel {
        // 0 → 1 → 0 under both actions
        let t = TabularMdp::new(2, 2, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0], vec![0.1, 0.5, 0.3, 0.2]).unwrap();
        embed_tabular(&t)
    }

    #[test]
    fn rejects_non_tabular_models() {
        let mut b = stream(1, Stream::EnvBuild);
        let m = random_low_rank(4, 2, 3, &mut b, 0.2).unwrap();
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 1.0, beta: 0.1, horizon: 5 };
        assert_eq!(TabularAgent::new(&m, cfg, TabularVariant::Faithful).err(), Some(AgentError::NotTabular));
    }

    #[test]
    fn unvisited_pairs_take_the_cap() {
        let m = deterministic();
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 1.0, beta: 0.0, horizon: 5 };
        let mut agent = TabularAgent::new(&m, cfg, TabularVariant::Faithful).unwrap();
        agent.act(0);
        let plan = agent.plan().unwrap();
        for s in 0..2 {
            assert!((plan.vtilde(1, s) - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_successor_gives_exact_expectation() {
        let m = deterministic();
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 1.0, beta: 0.0, horizon: 10 };
        let mut agent = TabularAgent::new(&m, cfg, TabularVariant::Faithful).unwrap();
        let a = agent.act(0);
        agent.observe(m.reward(0, a), 1);
        // first observation always doubles Σ ln(1+N): 0 → ln 2 is not > ln 2
        assert_eq!(agent.episodes(), 1);
        let a2 = agent.act(1);
        agent.observe(m.reward(1, a2), 0);
        assert_eq!(agent.episodes(), 2);
        let v = [3.0, 7.0];
        assert_eq!(agent.phat(0, a, &v), Some(7.0));
        assert_eq!(agent.phat(1, a2, &v), Some(3.0));
        assert_eq!(agent.phat(1, 1 - a2, &v), None);
    }

    #[test]
    fn thresholds_are_monotone() {
        let mut b = stream(2, Stream::EnvBuild);
        let m = embed_tabular(&crate::envs::random_unichain_tabular(3, 2, &mut b, 0.2).unwrap());
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 2.0, beta: 0.2, horizon: 100 };
        let mut agent = TabularAgent::new(&m, cfg, TabularVariant::Faithful).unwrap();
        let mut rng = stream(3, Stream::Transitions);
        let mut s = 0;
        for _ in 0..cfg.horizon {
            let a = agent.act(s);
            let next = m.sample_next(s, a, &mut rng);
            agent.observe(m.reward(s, a), next);
            s = next;
        }
        assert_eq!(agent.thresholds()[0], cfg.cap());
        assert!(agent.thresholds().windows(2).all(|w| w[1] <= w[0]));
        assert!(agent.episodes() > 1);
    }
}
