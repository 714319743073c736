use std::sync::Arc;

use serde::Serialize;

use super::generation::{deviation_clip, qtilde_formula, value_clip, Chain, DeviationClip, Generation};
use super::{Agent, AgentConfig, AgentError};
use crate::envs::FeatureMap;
use crate::estimator::{combine_solved, GroupedMoments};
use crate::mathcore::{dot, weighted_norm, PsdMatrixState, Threshold};

/// Deliberately broken variants used to show that the invariant checkers can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DcVariant {
    Faithful,
    /// `Q = Q̃`, no clipping against earlier generations.
    NoDeviationClip,
    /// `m_{t+1} = m_t`.
    NoThresholdUpdate,
}

/// Counters collected while planning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DcStats {
    pub plans: u64,
    /// Number of `Q^t_u(s,a)` evaluations made while planning.
    pub q_evals: u64,
    /// How many of those had a deviation-clip interval with `L > U`.
    pub inverted: u64,
}

pub struct DcAgent {
    cfg: AgentConfig,
    variant: DcVariant,
    features: Arc<dyn FeatureMap + Send + Sync>,
    cov: PsdMatrixState,
    moments: GroupedMoments,
    s1: Option<usize>,
    t: usize,
    state: usize,
    action: usize,
    /// `thresholds[i]` is `m_{i−1}`.
    thresholds: Vec<Threshold>,
    chain: Chain,
    potential_sum: f64,
    stats: DcStats,
}

impl DcAgent {
    pub fn new(
        features: Arc<dyn FeatureMap + Send + Sync>,
        cfg: AgentConfig,
        variant: DcVariant,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mode = match variant {
            DcVariant::NoDeviationClip => DeviationClip::Off,
            _ => DeviationClip::On,
        };
        let cap = cfg.cap();
        Ok(Self {
            cov: PsdMatrixState::new(features.dim(), cfg.lambda),
            moments: GroupedMoments::new(features.dim()),
            features,
            cfg,
            variant,
            s1: None,
            t: 0,
            state: 0,
            action: 0,
            thresholds: vec![Threshold::Unset, Threshold::Unset, Threshold::Finite(cap)],
            chain: Chain::initial(cfg.horizon, cap, cfg.h, mode),
            potential_sum: 0.0,
            stats: DcStats::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn variant(&self) -> DcVariant {
        self.variant
    }

    pub fn features(&self) -> &dyn FeatureMap {
        self.features.as_ref()
    }

    /// Current step `t` (zero before the first action).
    pub fn step(&self) -> usize {
        self.t
    }

    /// Value functions of the current step.
    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    /// `m_t` for `t ≥ −1`; unset beyond what has been computed.
    pub fn m(&self, t: i64) -> Threshold {
        usize::try_from(t + 1).ok().and_then(|i| self.thresholds.get(i).copied()).unwrap_or(Threshold::Unset)
    }

    /// `m_{−1}, m_0, m_1, …` as computed so far.
    pub fn thresholds(&self) -> &[Threshold] {
        &self.thresholds
    }

    pub fn covariance(&self) -> &PsdMatrixState {
        &self.cov
    }

    /// `Σ_τ φ_τᵀ Λ_τ⁻¹ φ_τ` over the observed transitions.
    pub fn potential_sum(&self) -> f64 {
        self.potential_sum
    }

    pub fn stats(&self) -> DcStats {
        self.stats
    }

    pub fn initial_state(&self) -> Option<usize> {
        self.s1
    }

    /// Builds `G_t` from transitions `1..t−1`.
    fn plan(&mut self) {
        let t = self.t;
        let horizon = self.cfg.horizon;
        let (gamma, beta, h, cap) = (self.cfg.gamma, self.cfg.beta, self.cfg.h, self.cfg.cap());
        let fm = self.features.as_ref();
        let na = fm.num_actions();
        let d = fm.dim();
        let s1 = self.s1.expect("initial state recorded");
        let m_t = self.m(t as i64);
        let m_now = m_t.value().expect("m_t is finite from t = 1 on");
        let m3 = [self.m(t as i64 - 2), self.m(t as i64 - 1), m_t];
        let mode = self.chain.mode;
        let prev1 = self.chain.cur.clone();
        let prev2 = self.chain.prev1.clone();

        let inv = self.cov.inv().clone();
        // states where V^t_{u+1} is needed: s₁ first, then every distinct next state
        let mut states = vec![s1];
        let pos: Vec<usize> = self
            .moments
            .states()
            .iter()
            .map(|&s| {
                if s == s1 {
                    0
                } else {
                    states.push(s);
                    states.len() - 1
                }
            })
            .collect();
        let z = self.moments.solved(&inv);
        let norms: Vec<[f64; 3]> = states
            .iter()
            .flat_map(|&s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| {
                let phi = fm.feature(s, a);
                [weighted_norm(&inv, phi), prev1.norm(phi), prev2.norm(phi)]
            })
            .collect();

        let mut weights = vec![Vec::new(); horizon - t + 1];
        let mut anchors = vec![0.0; horizon - t + 1];
        let mut v_next = vec![cap; states.len()];
        let mut vals = vec![0.0; pos.len()];
        let mut stats = self.stats;
        for u in (t..=horizon).rev() {
            let anchor = v_next[0];
            for (v, &p) in vals.iter_mut().zip(&pos) {
                *v = v_next[p];
            }
            let w = combine_solved(&z, &vals, anchor, d);
            if u > t {
                for (k, &s) in states.iter().enumerate() {
                    let mut vt = f64::NEG_INFINITY;
                    for a in 0..na {
                        let phi = fm.feature(s, a);
                        let r = fm.reward(s, a);
                        let n = norms[k * na + a];
                        let qt = qtilde_formula(r, gamma, dot(phi, &w) + anchor, beta, n[0], cap);
                        let q1 = prev1.qtilde_with_norm(u, phi, r, n[1]);
                        let q2 = prev2.qtilde_with_norm(u, phi, r, n[2]);
                        let parts = deviation_clip(qt, q1, q2, m3, mode);
                        stats.q_evals += 1;
                        if parts.inverted() {
                            stats.inverted += 1;
                        }
                        vt = vt.max(parts.q);
                    }
                    v_next[k] = value_clip(vt, m_now, h);
                }
            }
            weights[u - t] = w;
            anchors[u - t] = anchor;
        }
        stats.plans += 1;
        self.stats = stats;
        let gen = Generation::fitted(t, horizon, gamma, beta, m_t, inv, weights, anchors);
        self.chain = self.chain.advance(Arc::new(gen));
    }
}

impl Agent for DcAgent {
    fn name(&self) -> &'static str {
        "dc"
    }

    fn act(&mut self, state: usize) -> usize {
        assert!(self.t < self.cfg.horizon, "act called after the horizon");
        self.t += 1;
        if self.t == 1 {
            self.s1 = Some(state);
        }
        self.state = state;
        self.plan();
        self.action = self.chain.greedy(self.features.as_ref(), self.t, state);
        self.action
    }

    fn observe(&mut self, _reward: f64, next_state: usize) {
        let phi = self.features.feature(self.state, self.action).to_vec();
        self.potential_sum += self.cov.rank1_update(&phi);
        self.moments.push(&phi, next_state);
        let m_t = *self.thresholds.last().expect("thresholds initialized");
        let next = if self.variant == DcVariant::NoThresholdUpdate || self.t == self.cfg.horizon {
            m_t
        } else {
            m_t.min_with(self.chain.vtilde(self.features.as_ref(), self.t + 1, next_state))
        };
        self.thresholds.push(next);
    }

    fn threshold(&self) -> Option<f64> {
        self.m(self.t as i64).value()
    }

    fn logdet(&self) -> Option<f64> {
        Some(self.cov.logdet())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{embed_tabular, random_unichain_tabular, LinearMdpModel, TabularMdp};
    use crate::rng::{stream, Stream};

    fn two_state() -> Arc<LinearMdpModel> {
        let t = TabularMdp::new(2, 2, vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.1, 0.9], vec![0.2, 0.6, 0.4, 0.9]).unwrap();
        Arc::new(embed_tabular(&t))
    }

    fn run(model: &Arc<LinearMdpModel>, cfg: AgentConfig, variant: DcVariant, seed: u64) -> DcAgent {
        let mut agent = DcAgent::new(model.clone(), cfg, variant).unwrap();
        let mut rng = stream(seed, Stream::Transitions);
        let mut s = 0;
        for _ in 0..cfg.horizon {
            let a = agent.act(s);
            let next = model.sample_next(s, a, &mut rng);
            agent.observe(model.reward(s, a), next);
            s = next;
        }
        agent
    }

    #[test]
    fn first_step_values_are_capped() {
        // r ≡ 1, γ = 0.5: min(1 + 0.5·(2 + β‖φ‖), 2) = 2
        let t = TabularMdp::new(2, 2, vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.1, 0.9], vec![1.0; 4]).unwrap();
        let model = Arc::new(embed_tabular(&t));
        let cfg = AgentConfig { gamma: 0.5, lambda: 1.0, h: 1.0, beta: 0.3, horizon: 2 };
        let mut agent = DcAgent::new(model.clone(), cfg, DcVariant::Faithful).unwrap();
        agent.act(0);
        let fm = model.as_ref() as &dyn FeatureMap;
        for s in 0..2 {
            for a in 0..2 {
                for u in 1..=2 {
                    assert_eq!(agent.chain().qtilde(fm, u, s, a), 2.0);
                }
            }
            assert_eq!(agent.chain().v(fm, 1, s), 2.0);
        }
        agent.observe(1.0, 1);
        // Ṽ¹₂ = 2 so m₂ = m₁ = 2
        assert_eq!(agent.m(2), Threshold::Finite(2.0));
    }

    #[test]
    fn single_action_environment_picks_action_zero() {
        let t = TabularMdp::new(2, 1, vec![0.5, 0.5, 0.5, 0.5], vec![0.3, 0.7]).unwrap();
        let model = Arc::new(embed_tabular(&t));
        let cfg = AgentConfig { gamma: 0.8, lambda: 1.0, h: 2.0, beta: 0.1, horizon: 20 };
        let mut agent = DcAgent::new(model.clone(), cfg, DcVariant::Faithful).unwrap();
        assert_eq!(agent.act(0), 0);
    }

    #[test]
    fn plan_matches_lazy_evaluation_bit_for_bit() {
        // The anchors stored in G_t are V^t_{u+1}(s₁) computed inside the
        // planning loop; re-evaluating them lazily must give identical bits.
        let model = two_state();
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 3.0, beta: 0.2, horizon: 40 };
        let mut agent = DcAgent::new(model.clone(), cfg, DcVariant::Faithful).unwrap();
        let mut rng = stream(4, Stream::Transitions);
        let mut s = 0;
        let fm = model.as_ref() as &dyn FeatureMap;
        for _ in 0..cfg.horizon {
            let a = agent.act(s);
            let chain = agent.chain().clone();
            let t = agent.step();
            for u in t..cfg.horizon {
                let (_, anchor) = chain.cur.weight(u).unwrap();
                assert_eq!(anchor.to_bits(), chain.v(fm, u + 1, 0).to_bits(), "t={t} u={u}");
            }
            let next = model.sample_next(s, a, &mut rng);
            agent.observe(model.reward(s, a), next);
            s = next;
        }
    }

    #[test]
    fn thresholds_and_caps_hold_over_a_run() {
        let model = two_state();
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 3.0, beta: 0.2, horizon: 50 };
        let agent = run(&model, cfg, DcVariant::Faithful, 1);
        let cap = cfg.cap();
        let ms: Vec<f64> = agent.thresholds()[2..].iter().map(|m| m.value().unwrap()).collect();
        assert_eq!(ms[0], cap);
        assert!(ms.windows(2).all(|w| w[1] <= w[0]));
        let g = &agent.chain().cur;
        for u in g.index() as usize..=cfg.horizon {
            let (_, anchor) = g.weight(u).unwrap();
            assert!((0.0..=cap).contains(&anchor));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let mut b = stream(2, Stream::EnvBuild);
        let model = Arc::new(embed_tabular(&random_unichain_tabular(3, 2, &mut b, 0.1).unwrap()));
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 2.0, beta: 0.1, horizon: 30 };
        let a = run(&model, cfg, DcVariant::Faithful, 3);
        let b = run(&model, cfg, DcVariant::Faithful, 3);
        assert_eq!(a.thresholds(), b.thresholds());
        assert_eq!(a.covariance().logdet().to_bits(), b.covariance().logdet().to_bits());
    }

    #[test]
    fn frozen_thresholds_stay_at_cap() {
        let model = two_state();
        let cfg = AgentConfig { gamma: 0.9, lambda: 1.0, h: 3.0, beta: 0.2, horizon: 20 };
        let agent = run(&model, cfg, DcVariant::NoThresholdUpdate, 5);
        assert!(agent.thresholds()[2..].iter().all(|&m| m == Threshold::Finite(cfg.cap())));
    }
}
