//! Closed-form value functions produced by one planning pass.
//!
//! A [`Generation`] built at step `t` stores, for every `u ∈ [t:T]`, the
//! regression weight and anchor of `V^t_{u+1}` together with one snapshot of
//! `Λ_t⁻¹`. `Q̃^t_u(s,a)` is then evaluated on demand in `O(d²)`.
//! A [`Chain`] bundles a generation with its two predecessors, which is all
//! that deviation-controlled clipping needs to produce `Q^t_u`, `Ṽ^t_u` and
//! `V^t_u` at any state.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::envs::FeatureMap;
use crate::mathcore::{clip, clip_unordered, dot, weighted_norm, Threshold};

#[derive(Clone, Debug)]
struct Fitted {
    start: usize,
    gamma: f64,
    beta: f64,
    inv: DMatrix<f64>,
    /// `weights[u - start]`
    weights: Vec<Vec<f64>>,
    anchors: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Generation {
    /// Creation step; `0` and `-1` are the constant initial generations.
    index: i64,
    horizon: usize,
    cap: f64,
    threshold: Threshold,
    fitted: Option<Fitted>,
}

/// `(r + γ(p + β·norm)) ∧ cap` where `p` is the estimate of `[PV](s,a)`.
#[inline]
pub fn qtilde_formula(r: f64, gamma: f64, p: f64, beta: f64, norm: f64, cap: f64) -> f64 {
    (r + gamma * (p + beta * norm)).min(cap)
}

impl Generation {
    /// Generation whose `Q̃` is the constant `cap` for every `u`.
    pub fn sentinel(index: i64, horizon: usize, cap: f64, threshold: Threshold) -> Self {
        Self { index, horizon, cap, threshold, fitted: None }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn fitted(
        start: usize,
        horizon: usize,
        gamma: f64,
        beta: f64,
        threshold: Threshold,
        inv: DMatrix<f64>,
        weights: Vec<Vec<f64>>,
        anchors: Vec<f64>,
    ) -> Self {
        assert!(start >= 1 && start <= horizon, "generation start {start} outside [1, {horizon}]");
        assert_eq!(weights.len(), horizon - start + 1, "one weight per u in [start, horizon]");
        assert_eq!(anchors.len(), weights.len());
        Self {
            index: start as i64,
            horizon,
            cap: 1.0 / (1.0 - gamma),
            threshold,
            fitted: Some(Fitted { start, gamma, beta, inv, weights, anchors }),
        }
    }

    pub fn index(&self) -> i64 {
        self.index
    }

    pub fn is_sentinel(&self) -> bool {
        self.fitted.is_none()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `m_t` for the step that built this generation.
    pub fn threshold(&self) -> Threshold {
        self.threshold
    }

    /// True when `u` indexes a function of this generation.
    pub fn covers(&self, u: usize) -> bool {
        match &self.fitted {
            None => true,
            Some(f) => u >= f.start && u <= self.horizon,
        }
    }

    /// `‖φ‖_{Λ⁻¹}` under this generation's snapshot; zero for sentinels.
    pub fn norm(&self, phi: &[f64]) -> f64 {
        match &self.fitted {
            None => 0.0,
            Some(f) => weighted_norm(&f.inv, phi),
        }
    }

    /// Weight and anchor fitted for `u`.
    pub fn weight(&self, u: usize) -> Option<(&[f64], f64)> {
        let f = self.fitted.as_ref()?;
        self.check(u);
        Some((&f.weights[u - f.start], f.anchors[u - f.start]))
    }

    pub fn inv(&self) -> Option<&DMatrix<f64>> {
        self.fitted.as_ref().map(|f| &f.inv)
    }

    fn check(&self, u: usize) {
        assert!(
            self.covers(u),
            "generation {} evaluated at u = {u}, outside its range [{}, {}]",
            self.index,
            self.index,
            self.horizon
        );
    }

    /// `Q̃ᵘ(s,a)` given `φ(s,a)`, `r(s,a)` and a precomputed `‖φ‖_{Λ⁻¹}`.
    pub fn qtilde_with_norm(&self, u: usize, phi: &[f64], r: f64, norm: f64) -> f64 {
        self.check(u);
        match &self.fitted {
            None => self.cap,
            Some(f) => {
                let k = u - f.start;
                let p = dot(phi, &f.weights[k]) + f.anchors[k];
                qtilde_formula(r, f.gamma, p, f.beta, norm, self.cap)
            }
        }
    }

    pub fn qtilde(&self, u: usize, phi: &[f64], r: f64) -> f64 {
        self.qtilde_with_norm(u, phi, r, self.norm(phi))
    }
}

/// Whether `Q` is clipped against the two previous generations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeviationClip {
    On,
    Off,
}

/// The clip interval and result for one `(u, s, a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QParts {
    pub qtilde: f64,
    pub lower: f64,
    pub upper: f64,
    pub q: f64,
}

impl QParts {
    pub fn inverted(&self) -> bool {
        self.lower > self.upper
    }
}

/// `U = Q̃₁ ∧ Q̃₂`, `L = (Q̃₁ − m_{t−1} + m_t) ∨ (Q̃₂ − m_{t−2} + m_t)` and
/// `Q = (Q̃ ∨ L) ∧ U`. `m = [m_{t−2}, m_{t−1}, m_t]`.
#[inline]
pub fn deviation_clip(qt: f64, q1: f64, q2: f64, m: [Threshold; 3], mode: DeviationClip) -> QParts {
    let upper = q1.min(q2);
    let lower = Threshold::shifted(q1, m[1], m[2]).max(Threshold::shifted(q2, m[0], m[2]));
    let q = match mode {
        DeviationClip::On => clip_unordered(qt, lower, upper),
        DeviationClip::Off => qt,
    };
    QParts { qtilde: qt, lower, upper, q }
}

/// `Clip(Ṽ; m, m + H)`.
#[inline]
pub fn value_clip(vtilde: f64, m: f64, h: f64) -> f64 {
    clip(vtilde, m, m + h)
}

/// The value functions `{Q̃^t_u, Q^t_u, Ṽ^t_u, V^t_u}` of one step.
#[derive(Clone, Debug)]
pub struct Chain {
    pub cur: Arc<Generation>,
    pub prev1: Arc<Generation>,
    pub prev2: Arc<Generation>,
    pub h: f64,
    pub mode: DeviationClip,
}

impl Chain {
    /// The chain in force before the first step: generations `0` and `-1`.
    pub fn initial(horizon: usize, cap: f64, h: f64, mode: DeviationClip) -> Self {
        let g0 = Arc::new(Generation::sentinel(0, horizon, cap, Threshold::Unset));
        let gm1 = Arc::new(Generation::sentinel(-1, horizon, cap, Threshold::Unset));
        Self { cur: g0, prev1: gm1.clone(), prev2: gm1, h, mode }
    }

    /// The chain obtained by appending `next`.
    pub fn advance(&self, next: Arc<Generation>) -> Self {
        Self { cur: next, prev1: self.cur.clone(), prev2: self.prev1.clone(), h: self.h, mode: self.mode }
    }

    pub fn step(&self) -> i64 {
        self.cur.index()
    }

    pub fn horizon(&self) -> usize {
        self.cur.horizon()
    }

    pub fn cap(&self) -> f64 {
        self.cur.cap()
    }

    /// `[m_{t−2}, m_{t−1}, m_t]`
    pub fn thresholds(&self) -> [Threshold; 3] {
        [self.prev2.threshold(), self.prev1.threshold(), self.cur.threshold()]
    }

    /// `‖φ‖` under the three snapshots, newest first.
    pub fn norms(&self, phi: &[f64]) -> [f64; 3] {
        [self.cur.norm(phi), self.prev1.norm(phi), self.prev2.norm(phi)]
    }

    pub fn q_parts_with_norms(&self, u: usize, phi: &[f64], r: f64, norms: [f64; 3]) -> QParts {
        let qt = self.cur.qtilde_with_norm(u, phi, r, norms[0]);
        let q1 = self.prev1.qtilde_with_norm(u, phi, r, norms[1]);
        let q2 = self.prev2.qtilde_with_norm(u, phi, r, norms[2]);
        deviation_clip(qt, q1, q2, self.thresholds(), self.mode)
    }

    pub fn q_parts(&self, fm: &dyn FeatureMap, u: usize, s: usize, a: usize) -> QParts {
        let phi = fm.feature(s, a);
        self.q_parts_with_norms(u, phi, fm.reward(s, a), self.norms(phi))
    }

    pub fn qtilde(&self, fm: &dyn FeatureMap, u: usize, s: usize, a: usize) -> f64 {
        self.cur.qtilde(u, fm.feature(s, a), fm.reward(s, a))
    }

    pub fn q(&self, fm: &dyn FeatureMap, u: usize, s: usize, a: usize) -> f64 {
        self.q_parts(fm, u, s, a).q
    }

    /// `Ṽ^t_u(s) = max_a Q^t_u(s,a)`; the constant `cap` at `u = T + 1`.
    pub fn vtilde(&self, fm: &dyn FeatureMap, u: usize, s: usize) -> f64 {
        if u == self.horizon() + 1 {
            return self.cap();
        }
        (0..fm.num_actions()).map(|a| self.q(fm, u, s, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V^t_u(s) = Clip(Ṽ^t_u(s); m_t, m_t + H)`; the constant `cap` at `u = T + 1`.
    ///
    /// # Panics
    ///
    /// Panics on a sentinel chain, whose threshold is unset.
    pub fn v(&self, fm: &dyn FeatureMap, u: usize, s: usize) -> f64 {
        if u == self.horizon() + 1 {
            return self.cap();
        }
        let m = self.cur.threshold().value().expect("V is defined only once m_t is set");
        value_clip(self.vtilde(fm, u, s), m, self.h)
    }

    /// `argmax_a Q^t_u(s,a)`, ties to the lowest index.
    pub fn greedy(&self, fm: &dyn FeatureMap, u: usize, s: usize) -> usize {
        super::argmax((0..fm.num_actions()).map(|a| self.q(fm, u, s, a)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unset() -> Threshold {
        Threshold::Unset
    }

    #[test]
    fn sentinel_is_cap() {
        let g = Generation::sentinel(0, 10, 4.0, unset());
        assert_eq!(g.qtilde(7, &[0.3, 0.4], 0.2), 4.0);
        assert!(g.covers(1) && g.covers(10));
    }

    #[test]
    fn first_step_hits_cap() {
        // γ = 0.5, no data: w = 0, anchor = cap = 2, r = 1.
        let g = Generation::fitted(1, 2, 0.5, 0.3, Threshold::Finite(2.0), DMatrix::identity(2, 2), vec![vec![0.0; 2]; 2], vec![2.0; 2]);
        assert_eq!(g.qtilde(1, &[1.0, 0.0], 1.0), 2.0);
        assert_eq!(g.qtilde(2, &[0.0, 0.0], 1.0), 2.0);
    }

    #[test]
    fn zero_case() {
        let g = Generation::fitted(1, 1, 0.5, 0.0, Threshold::Finite(2.0), DMatrix::identity(1, 1), vec![vec![0.0]], vec![0.0]);
        assert_eq!(g.qtilde(1, &[1.0], 0.0), 0.0);
    }

    #[test]
    #[should_panic(expected = "outside its range")]
    fn out_of_range_u_panics() {
        let g = Generation::fitted(3, 5, 0.5, 0.0, Threshold::Finite(2.0), DMatrix::identity(1, 1), vec![vec![0.0]; 3], vec![0.0; 3]);
        g.qtilde(2, &[1.0], 0.0);
    }

    #[test]
    fn clip_with_sentinel_predecessors_is_vacuous() {
        let m = [unset(), unset(), Threshold::Finite(2.0)];
        let p = deviation_clip(1.7, 2.0, 2.0, m, DeviationClip::On);
        assert_eq!(p.lower, f64::NEG_INFINITY);
        assert_eq!(p.upper, 2.0);
        assert_eq!(p.q, 1.7);
    }

    #[test]
    fn crossed_bounds_resolve_to_upper() {
        // Equal thresholds: L = Q̃₁ ∨ Q̃₂ = 6 > U = Q̃₁ ∧ Q̃₂ = 4.
        let m = [Threshold::Finite(3.0); 3];
        let p = deviation_clip(5.0, 4.0, 6.0, m, DeviationClip::On);
        assert_eq!((p.lower, p.upper, p.q), (6.0, 4.0, 4.0));
        assert!(p.inverted());
        let off = deviation_clip(5.0, 4.0, 6.0, m, DeviationClip::Off);
        assert_eq!(off.q, 5.0);
    }

    #[test]
    fn lower_bound_binds() {
        let m = [Threshold::Finite(2.0), Threshold::Finite(1.5), Threshold::Finite(1.0)];
        // L = max(4 − 0.5, 6 − 1) = 5, U = 4: crossed, U wins.
        assert_eq!(deviation_clip(3.0, 4.0, 6.0, m, DeviationClip::On).q, 4.0);
        // L = max(4 − 0.5, 4.2 − 1) = 3.5 ≤ U = 4: Q̃ = 3 is raised to 3.5.
        assert_eq!(deviation_clip(3.0, 4.0, 4.2, m, DeviationClip::On).q, 3.5);
    }

    #[test]
    fn value_clip_saturates() {
        assert_eq!(value_clip(7.0, 3.0, 2.0), 5.0);
        assert_eq!(value_clip(1.0, 3.0, 2.0), 3.0);
    }
}
