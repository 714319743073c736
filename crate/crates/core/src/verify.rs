//! Runtime checks of the inequalities the agents are built to satisfy.
//!
//! Every checker produces a [`CheckReport`]: how many instances were
//! checked, how many violated the inequality by more than [`TOL`], the
//! smallest slack seen and the first counterexample. Deterministic
//! inequalities count any violation as a failure; the statistical ones
//! (optimism and the per-step upper bound) are judged by their pass fraction.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::agents::{Agent, AgentConfig, DcAgent, DcStats, DcVariant, TabularAgent, TabularPlan, TabularVariant};
use crate::envs::{random_unichain_tabular, FeatureMap, LinearMdpModel};
use crate::estimator::{fit_weight, RegressionTarget};
use crate::mathcore::{clip, PsdMatrixState, Threshold};
use crate::oracle::{discounting_gap, OracleError};
use crate::rng::{stream, Stream};

/// Absolute slack allowed on every inequality.
pub const TOL: f64 = 1e-9;
/// Random probe states added to the visited ones.
pub const EXTRA_PROBES: usize = 10;
/// Horizon up to which every `u` is checked when a full sweep is requested.
pub const FULL_SWEEP_MAX_T: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub checked: u64,
    pub violations: u64,
    /// Smallest `bound − value`; absent when every instance was vacuous.
    pub worst_slack: Option<f64>,
    pub pass_fraction: f64,
    pub counterexample: Option<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Sums several reports of the same suite.
    pub fn merge(suite: &str, reports: &[CheckReport]) -> CheckReport {
        let mut tally = Tally::default();
        for r in reports {
            tally.checked += r.checked;
            tally.violations += r.violations;
            if let Some(s) = r.worst_slack {
                tally.worst = tally.worst.min(s);
            }
            if tally.first.is_none() {
                tally.first = r.counterexample.clone();
            }
        }
        tally.finish(suite)
    }
}

#[derive(Clone, Debug)]
struct Tally {
    checked: u64,
    violations: u64,
    worst: f64,
    first: Option<String>,
    tol: f64,
}

impl Default for Tally {
    fn default() -> Self {
        Self { checked: 0, violations: 0, worst: f64::INFINITY, first: None, tol: TOL }
    }
}

impl Tally {
    fn exact() -> Self {
        Self { tol: 0.0, ..Self::default() }
    }

    fn record(&mut self, slack: f64, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if slack < self.worst {
            self.worst = slack;
        }
        if !(slack >= -self.tol) {
            self.violations += 1;
            if self.first.is_none() {
                self.first = Some(describe());
            }
        }
    }

    fn finish(self, suite: &str) -> CheckReport {
        let pass_fraction =
            if self.checked == 0 { 1.0 } else { 1.0 - self.violations as f64 / self.checked as f64 };
        CheckReport {
            suite: suite.to_string(),
            checked: self.checked,
            violations: self.violations,
            worst_slack: self.worst.is_finite().then_some(self.worst),
            pass_fraction,
            counterexample: self.first,
        }
    }
}

/// `u` values checked for a function chain living on `[lo, T]`.
pub fn sample_us(lo: usize, horizon: usize, full: bool) -> Vec<usize> {
    if lo > horizon {
        return Vec::new();
    }
    if full {
        return (lo..=horizon).collect();
    }
    let mut us = vec![lo, lo + 1, (lo + horizon) / 2, horizon];
    us.retain(|&u| u >= lo && u <= horizon);
    us.sort_unstable();
    us.dedup();
    us
}

/// The four clip properties on `samples` random dyadic points, exactly.
///
/// Points live on the grid `k/1024` so every translation is exact in binary
/// floating point and the equality in property (i) can be checked bit for bit.
pub fn check_clip_properties(samples: usize, seed: u64) -> CheckReport {
    let mut rng = stream(seed, Stream::Probes);
    let mut grid = |r: i64| rng.random_range(-r..=r) as f64 / 1024.0;
    let mut tally = Tally::exact();
    for _ in 0..samples {
        let (x, y, c) = (grid(50_000), grid(50_000), grid(20_000));
        let (a, b) = (grid(30_000), grid(30_000));
        let (lo, hi) = (a.min(b), a.max(b));
        let (a2, b2) = (grid(30_000), grid(30_000));
        let (lo2, hi2) = (a2.min(b2), a2.max(b2));
        let fx = clip(x, lo, hi);
        let shifted = clip(x - c, lo - c, hi - c) + c;
        tally.record(-(fx - shifted).abs(), || format!("(i) x={x} c={c} L={lo} U={hi}"));
        let (small, big) = (x.min(y), x.max(y));
        tally.record(clip(big, lo, hi) - clip(small, lo, hi), || format!("(ii) x={small} y={big} L={lo} U={hi}"));
        let holds = (fx <= x) == (x >= lo);
        tally.record(if holds { 0.0 } else { -1.0 }, || format!("(iii) x={x} L={lo} U={hi}"));
        // (iv) with the second interval pushed below the first
        let (lo_b, hi_b) = (lo.min(lo2), hi.min(hi2).max(lo.min(lo2)));
        tally.record(fx - clip(x, lo_b, hi_b), || format!("(iv) x={x} L={lo} U={hi} L'={lo_b} U'={hi_b}"));
    }
    tally.finish("clip")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NegativeResult {
    pub n: usize,
    pub delta: f64,
    pub observed: f64,
    pub predicted: f64,
}

/// `n` features `(η, ±1/2, 0)` with `η = 1/√n`, all targets `Δ`, `λ = 1`.
/// An odd `n` gets a zero feature in the last slot. Returns `|w₁|` from the
/// general regression path next to `Δ√n/2`.
pub fn negative_construction(n: usize, delta: f64) -> NegativeResult {
    assert!(n >= 1 && delta > 0.0, "need n ≥ 1 and Δ > 0");
    let d = 3;
    let half = n / 2;
    let eta = 1.0 / (n as f64).sqrt();
    let mut feats = Vec::with_capacity(n);
    for i in 0..n {
        let phi = if i < half {
            vec![eta, 0.5, 0.0]
        } else if i < 2 * half {
            vec![eta, -0.5, 0.0]
        } else {
            vec![0.0; d]
        };
        feats.push(phi);
    }
    let mut cov = PsdMatrixState::new(d, 1.0);
    for phi in &feats {
        cov.rank1_update(phi);
    }
    let fw = fit_weight(&cov, &feats, &RegressionTarget { values: vec![delta; n], anchor: 0.0 });
    NegativeResult { n, delta, observed: fw.w[0].abs(), predicted: delta * (n as f64).sqrt() / 2.0 }
}

/// The even-`n` grid `{4, 100, 10⁴} × {0.1, 1, 10}` at relative tolerance `1e-9`.
pub fn check_negative(cases: &[(usize, f64)]) -> CheckReport {
    let mut tally = Tally::exact();
    for &(n, delta) in cases {
        let r = negative_construction(n, delta);
        let rel = (r.observed - r.predicted).abs() / r.predicted;
        tally.record(1e-9 - rel, || format!("n={n} delta={delta} observed={} predicted={}", r.observed, r.predicted));
    }
    tally.finish("negative")
}

pub const NEGATIVE_CASES: [(usize, f64); 9] =
    [(4, 0.1), (4, 1.0), (4, 10.0), (100, 0.1), (100, 1.0), (100, 10.0), (10_000, 0.1), (10_000, 1.0), (10_000, 10.0)];

/// Discounted-versus-average comparison on `count` random unichain MDPs
/// with `S ≤ 6`, `A ≤ 3`.
pub fn check_discounting(count: usize, gammas: &[f64], seed: u64, tol: f64) -> Result<CheckReport, OracleError> {
    let mut rng = stream(seed, Stream::EnvBuild);
    let mut tally = Tally { tol: 0.0, ..Tally::default() };
    for i in 0..count {
        let ns = 2 + i % 5;
        let na = 1 + i % 3;
        let mdp = random_unichain_tabular(ns, na, &mut rng, 0.05 + 0.05 * (i % 4) as f64)
            .expect("generator parameters are valid");
        for &gamma in gammas {
            let gap = discounting_gap(&mdp, gamma, 1e-11)?;
            tally.record(2.0 * gap.span_bias + tol - gap.span_discounted, || format!("mdp {i} gamma {gamma}: {gap:?}"));
            tally.record((1.0 - gamma) * gap.span_bias + tol - gap.gain_gap, || {
                format!("mdp {i} gamma {gamma}: {gap:?}")
            });
        }
    }
    Ok(tally.finish("lemma2"))
}

/// `R_t = Σ_{τ≤t} (J* − r_τ)`.
pub fn regret_curve(rewards: &[f64], gain: f64) -> Vec<f64> {
    rewards
        .iter()
        .scan(0.0, |acc, &r| {
            *acc += gain - r;
            Some(*acc)
        })
        .collect()
}

fn probe_states(num_states: usize, extra: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, Stream::Probes);
    (0..extra).map(|_| rng.random_range(0..num_states)).collect()
}

/// What to check during a run of the deviation-controlled agent.
#[derive(Clone, Debug)]
pub struct DcRunSpec {
    pub model: Arc<LinearMdpModel>,
    pub cfg: AgentConfig,
    pub variant: DcVariant,
    pub seed: u64,
    pub start_state: usize,
    /// Check every `u` instead of a subsample (only honoured for `T ≤ 100`).
    pub full_sweep: bool,
    /// `V*_γ` for the run's `γ`; enables the optimism and upper-bound checks.
    pub vstar: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DcRunChecks {
    pub deviation: CheckReport,
    pub invariants: CheckReport,
    pub optimism: Option<CheckReport>,
    pub step_bound: Option<CheckReport>,
    pub potential: CheckReport,
    pub rewards: Vec<f64>,
    pub stats: DcStats,
}

/// Runs the deviation-controlled agent for `T` steps and checks, at every step:
///
/// * `|Ṽ^{t+1}_u(s) − Ṽ^t_u(s)|` and `|V^{t+1}_u(s) − V^t_u(s)|` against
///   `m_{t−1} − m_{t+1}` for sampled `u ∈ [t+1:T]` and every probe state;
/// * `m_{t+1} ≤ m_t ≤ 1/(1−γ)`, `Q̃ ≤ 1/(1−γ)` and `V ∈ [m_t, m_t + H]`;
/// * with `V*_γ` available, `V^t_u(s) ≥ V*_γ(s)` and, for `t ≥ 4` and visited
///   pairs, `Q^t_u(s,a) ≤ r + γ[PV^t_{u+1}](s,a) + 2β‖φ‖ + 2(m_{t−3} − m_t)`;
/// * `Σ φᵀΛ⁻¹φ ≤ 2d ln(1 + t)`.
///
/// Probes are the states visited so far plus [`EXTRA_PROBES`] random states.
pub fn check_dc_run(spec: &DcRunSpec) -> DcRunChecks {
    let model = &spec.model;
    let cfg = spec.cfg;
    let horizon = cfg.horizon;
    let full = spec.full_sweep && horizon <= FULL_SWEEP_MAX_T;
    let (ns, na) = (model.num_states(), model.num_actions());
    let fm: &dyn FeatureMap = model.as_ref();
    let cap = cfg.cap();
    let mut agent = DcAgent::new(model.clone(), cfg, spec.variant).expect("valid agent configuration");
    let mut rng = stream(spec.seed, Stream::Transitions);
    let extra = probe_states(ns, EXTRA_PROBES, spec.seed);

    let mut dev = Tally::default();
    let mut inv = Tally::default();
    let mut opt = Tally::default();
    let mut step = Tally::default();
    let mut pot = Tally::default();
    let mut visited = vec![false; ns];
    let mut visited_pairs = vec![false; ns * na];
    let mut rewards = Vec::with_capacity(horizon);
    let mut prev_chain: Option<crate::agents::Chain> = None;
    let mut s = spec.start_state;
    visited[s] = true;
    for t in 1..=horizon {
        let a = agent.act(s);
        let chain = agent.chain().clone();
        let probes: Vec<usize> = (0..ns).filter(|&x| visited[x]).chain(extra.iter().copied()).collect();
        let m = |k: i64| agent.m(k);
        let m_t = m(t as i64).value().expect("m_t finite");

        if let Some(prev) = &prev_chain {
            // pair (t−1, t): bound m_{t−2} − m_t
            let bound = Threshold::gap(m(t as i64 - 2), m(t as i64));
            for u in sample_us(t, horizon, full) {
                for &p in &probes {
                    let (vt_new, vt_old) = (chain.vtilde(fm, u, p), prev.vtilde(fm, u, p));
                    let (v_new, v_old) = (chain.v(fm, u, p), prev.v(fm, u, p));
                    let dv = (vt_new - vt_old).abs().max((v_new - v_old).abs());
                    dev.record(bound - dv, || {
                        format!(
                            "t={} u={u} s={p}: Vtilde {vt_old} -> {vt_new}, V {v_old} -> {v_new}, bound {bound}",
                            t - 1
                        )
                    });
                }
            }
        }

        let m_prev = m(t as i64 - 1);
        for u in sample_us(t, horizon, full) {
            for &p in &probes {
                let mut slack = m_prev.as_f64() - m_t;
                slack = slack.min(cap - m_t);
                for b in 0..na {
                    slack = slack.min(cap - chain.qtilde(fm, u, p, b));
                }
                let vt = chain.vtilde(fm, u, p);
                let v = chain.v(fm, u, p);
                slack = slack.min(cap - vt).min(v - m_t).min(m_t + cfg.h - v);
                inv.record(slack, || format!("t={t} u={u} s={p}: m_t={m_t} Vtilde={vt} V={v}"));
                if let Some(vstar) = &spec.vstar {
                    opt.record(v - vstar[p], || format!("t={t} u={u} s={p}: V={v} < V*={}", vstar[p]));
                }
            }
            if spec.vstar.is_some() && t >= 4 {
                let v_next: Vec<f64> = (0..ns).map(|x| chain.v(fm, u + 1, x)).collect();
                let decay = Threshold::gap(m(t as i64 - 3), m(t as i64));
                for (row, _) in visited_pairs.iter().enumerate().filter(|(_, &seen)| seen) {
                    let (ps, pa) = (row / na, row % na);
                    let q = chain.q(fm, u, ps, pa);
                    let bonus = chain.cur.norm(fm.feature(ps, pa));
                    let rhs = fm.reward(ps, pa)
                        + cfg.gamma * model.expect(ps, pa, &v_next)
                        + 2.0 * cfg.beta * bonus
                        + 2.0 * decay;
                    step.record(rhs - q, || format!("t={t} u={u} (s,a)=({ps},{pa}): Q={q} > {rhs}"));
                }
            }
        }

        let r = model.reward(s, a);
        let next = model.sample_next(s, a, &mut rng);
        agent.observe(r, next);
        rewards.push(r);
        visited_pairs[s * na + a] = true;
        visited[next] = true;
        let bound = 2.0 * fm.dim() as f64 * (1.0 + t as f64).ln();
        let sum = agent.potential_sum();
        pot.record(bound - sum, || format!("t={t}: potential sum {sum} > {bound}"));
        prev_chain = Some(chain);
        s = next;
    }

    DcRunChecks {
        deviation: dev.finish("deviation"),
        invariants: inv.finish("invariants"),
        optimism: spec.vstar.is_some().then(|| opt.finish("optimism")),
        step_bound: spec.vstar.is_some().then(|| step.finish("step-bound")),
        potential: pot.finish("potential"),
        rewards,
        stats: agent.stats(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TabularRunChecks {
    pub deviation: CheckReport,
    pub invariants: CheckReport,
    pub episodes: usize,
    /// Consecutive step pairs that straddle an episode boundary (not checked).
    pub boundary_pairs: usize,
    pub rewards: Vec<f64>,
}

/// Runs the tabular agent and checks, for consecutive steps inside one episode,
/// `|Ṽ^{t+1}_u(s) − Ṽ^t_u(s)| ≤ m_t − m_{t+1}` and the same for `V`, for all
/// `u ∈ [t+1:T]` and all states; plus the threshold and cap invariants.
pub fn check_tabular_run(
    model: &LinearMdpModel,
    cfg: AgentConfig,
    variant: TabularVariant,
    seed: u64,
    start_state: usize,
) -> TabularRunChecks {
    let horizon = cfg.horizon;
    let ns = model.num_states();
    let cap = cfg.cap();
    let mut agent = TabularAgent::new(model, cfg, variant).expect("one-hot model and valid configuration");
    let mut rng = stream(seed, Stream::Transitions);
    let mut dev = Tally::default();
    let mut inv = Tally::default();
    let mut boundary_pairs = 0;
    let mut prev: Option<Arc<TabularPlan>> = None;
    let mut rewards = Vec::with_capacity(horizon);
    let mut s = start_state;
    for t in 1..=horizon {
        let a = agent.act(s);
        let plan = agent.plan().expect("planned").clone();
        let ms = agent.thresholds();
        let m_t = ms[t - 1];
        let m_prev = if t >= 2 { ms[t - 2] } else { cap };
        for u in t..=horizon {
            for x in 0..ns {
                let (vt, v) = (plan.vtilde(u, x), plan.v(u, x));
                let slack = (m_prev - m_t).min(cap - m_t).min(cap - vt).min(v - m_t).min(m_t + cfg.h - v);
                inv.record(slack, || format!("t={t} u={u} s={x}: m_t={m_t} Vtilde={vt} V={v}"));
            }
        }
        if let Some(old) = &prev {
            if old.episode == plan.episode {
                let bound = old.threshold - plan.threshold;
                for u in t..=horizon {
                    for x in 0..ns {
                        let dv = (plan.vtilde(u, x) - old.vtilde(u, x)).abs().max((plan.v(u, x) - old.v(u, x)).abs());
                        dev.record(bound - dv, || {
                            format!("t={} u={u} s={x}: deviation {dv} > bound {bound}", t - 1)
                        });
                    }
                }
            } else {
                boundary_pairs += 1;
            }
        }
        let r = model.reward(s, a);
        let next = model.sample_next(s, a, &mut rng);
        agent.observe(r, next);
        rewards.push(r);
        prev = Some(plan);
        s = next;
    }
    TabularRunChecks {
        deviation: dev.finish("tabular-deviation"),
        invariants: inv.finish("invariants"),
        episodes: agent.episodes(),
        boundary_pairs,
        rewards,
    }
}
