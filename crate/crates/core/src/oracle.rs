//! Exact planners for finite MDPs.
//!
//! Discounted value iteration gives `V*_γ`; relative value iteration gives the
//! optimal gain `J*` and bias `v*`. Both have an independent linear-solve
//! counterpart for a fixed policy, used to cross-check the iterative answers.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::envs::TabularMdp;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Self-loop weight of the aperiodicity transform used by relative value iteration.
pub const APERIODICITY_TAU: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("discount factor {0} outside (0, 1)")]
    Gamma(f64),
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("policy has {got} entries for {expected} states")]
    PolicyShape { got: usize, expected: usize },
    #[error("singular system while evaluating a policy")]
    Singular,
}

pub fn span(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscountedSolution {
    pub gamma: f64,
    pub v: Vec<f64>,
    /// `[s·A + a]`
    pub q: Vec<f64>,
    pub iterations: usize,
}

impl DiscountedSolution {
    pub fn greedy_policy(&self, num_actions: usize) -> Vec<usize> {
        greedy(&self.q, num_actions)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GainBias {
    pub gain: f64,
    /// Bias `v*`, shifted so that its minimum is zero.
    pub bias: Vec<f64>,
    /// `q*(s,a) = r(s,a) - J* + [Pv*](s,a)`
    pub q: Vec<f64>,
    pub iterations: usize,
}

impl GainBias {
    pub fn span(&self) -> f64 {
        span(&self.bias)
    }

    pub fn greedy_policy(&self, num_actions: usize) -> Vec<usize> {
        greedy(&self.q, num_actions)
    }
}

fn greedy(q: &[f64], num_actions: usize) -> Vec<usize> {
    q.chunks_exact(num_actions)
        .map(|row| {
            let mut best = 0;
            for (a, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

fn bellman_q(m: &TabularMdp, v: &[f64], gamma: f64, q: &mut [f64]) {
    let na = m.num_actions();
    for s in 0..m.num_states() {
        for a in 0..na {
            q[s * na + a] = m.reward(s, a) + gamma * m.expect(s, a, v);
        }
    }
}

fn row_max(q: &[f64], num_actions: usize, out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(q.chunks_exact(num_actions)) {
        *o = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
}

/// Value iteration for `V*_γ`, stopped once the sup-norm change is at most
/// `tol·(1-γ)/(2γ)`, which puts the returned values within `tol/2` of `V*_γ`.
pub fn discounted_vi(m: &TabularMdp, gamma: f64, tol: f64) -> Result<DiscountedSolution, OracleError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(OracleError::Gamma(gamma));
    }
    let (ns, na) = (m.num_states(), m.num_actions());
    let threshold = tol * (1.0 - gamma) / (2.0 * gamma);
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        bellman_q(m, &v, gamma, &mut q);
        row_max(&q, na, &mut next);
        residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if residual <= threshold {
            bellman_q(m, &v, gamma, &mut q);
            return Ok(DiscountedSolution { gamma, v, q, iterations: it });
        }
    }
    Err(OracleError::NonConvergence { iterations: MAX_ITERATIONS, residual })
}

/// Exact discounted value of a deterministic stationary policy, `(I - γP_π)⁻¹ r_π`.
pub fn discounted_policy_value(m: &TabularMdp, gamma: f64, policy: &[usize]) -> Result<Vec<f64>, OracleError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(OracleError::Gamma(gamma));
    }
    let ns = m.num_states();
    check_policy(ns, policy)?;
    let mut a_mat = DMatrix::<f64>::identity(ns, ns);
    let mut b = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for (next, &p) in m.transition_row(s, policy[s]).iter().enumerate() {
            a_mat[(s, next)] -= gamma * p;
        }
        b[s] = m.reward(s, policy[s]);
    }
    let x = a_mat.lu().solve(&b).ok_or(OracleError::Singular)?;
    Ok(x.iter().copied().collect())
}

fn check_policy(ns: usize, policy: &[usize]) -> Result<(), OracleError> {
    if policy.len() != ns {
        return Err(OracleError::PolicyShape { got: policy.len(), expected: ns });
    }
    Ok(())
}

/// Relative value iteration on the aperiodicity-transformed operator
/// `v ← v + τ(Tv - v)`, stopped when `sp(Tv - v) ≤ tol`.
///
/// The gain is reported as the midpoint of `Tv - v`, which brackets `J*`.
pub fn relative_vi(m: &TabularMdp, tol: f64) -> Result<GainBias, OracleError> {
    relative_vi_with(m, tol, MAX_ITERATIONS)
}

pub fn relative_vi_with(m: &TabularMdp, tol: f64, max_iterations: usize) -> Result<GainBias, OracleError> {
    let (ns, na) = (m.num_states(), m.num_actions());
    let mut v = vec![0.0; ns];
    let mut tv = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        bellman_q(m, &v, 1.0, &mut q);
        row_max(&q, na, &mut tv);
        let diff: Vec<f64> = tv.iter().zip(&v).map(|(a, b)| a - b).collect();
        residual = span(&diff);
        if residual <= tol {
            let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let gain = 0.5 * (lo + hi);
            for x in q.iter_mut() {
                *x -= gain;
            }
            let mut bias = vec![0.0; ns];
            row_max(&q, na, &mut bias);
            let floor = bias.iter().copied().fold(f64::INFINITY, f64::min);
            bias.iter_mut().for_each(|x| *x -= floor);
            q.iter_mut().for_each(|x| *x -= floor);
            return Ok(GainBias { gain, bias, q, iterations: it });
        }
        let anchor = v[0] + APERIODICITY_TAU * diff[0];
        for s in 0..ns {
            v[s] += APERIODICITY_TAU * diff[s] - anchor;
        }
    }
    Err(OracleError::NonConvergence { iterations: max_iterations, residual })
}

/// Gain and bias of a deterministic policy from the linear system
/// `h + J·1 = r_π + P_π h`, `h(0) = 0`. Requires the policy's chain to be unichain.
pub fn average_policy_value(m: &TabularMdp, policy: &[usize]) -> Result<(f64, Vec<f64>), OracleError> {
    let ns = m.num_states();
    check_policy(ns, policy)?;
    // unknowns: x[0] = J, x[k] = h(k) for k ≥ 1
    let mut a_mat = DMatrix::<f64>::zeros(ns, ns);
    let mut b = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        a_mat[(s, 0)] = 1.0;
        if s > 0 {
            a_mat[(s, s)] += 1.0;
        }
        for (next, &p) in m.transition_row(s, policy[s]).iter().enumerate() {
            if next > 0 {
                a_mat[(s, next)] -= p;
            }
        }
        b[s] = m.reward(s, policy[s]);
    }
    let x = a_mat.lu().solve(&b).ok_or(OracleError::Singular)?;
    let mut h: Vec<f64> = std::iter::once(0.0).chain(x.iter().skip(1).copied()).collect();
    let floor = h.iter().copied().fold(f64::INFINITY, f64::min);
    h.iter_mut().for_each(|x| *x -= floor);
    Ok((x[0], h))
}

/// Comparison of the discounted and average-reward solutions of one MDP.
#[derive(Clone, Debug, Serialize)]
pub struct DiscountingGap {
    pub gamma: f64,
    pub gain: f64,
    pub span_bias: f64,
    pub span_discounted: f64,
    /// `max_s |(1-γ)V*_γ(s) - J*|`
    pub gain_gap: f64,
}

impl DiscountingGap {
    /// `sp(V*_γ) ≤ 2 sp(v*)` and `|(1-γ)V*_γ - J*| ≤ (1-γ) sp(v*)`, each up to `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.span_discounted <= 2.0 * self.span_bias + tol && self.gain_gap <= (1.0 - self.gamma) * self.span_bias + tol
    }
}

pub fn discounting_gap(m: &TabularMdp, gamma: f64, tol: f64) -> Result<DiscountingGap, OracleError> {
    let avg = relative_vi(m, tol)?;
    let disc = discounted_vi(m, gamma, tol)?;
    let gain_gap = disc.v.iter().map(|&x| ((1.0 - gamma) * x - avg.gain).abs()).fold(0.0, f64::max);
    Ok(DiscountingGap {
        gamma,
        gain: avg.gain,
        span_bias: avg.span(),
        span_discounted: span(&disc.v),
        gain_gap,
    })
}
