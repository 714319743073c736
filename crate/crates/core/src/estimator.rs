//! Ridge-regression estimate of `[PV](s,a)`.
//!
//! The regression is run on `V − V(s₁)` and the anchor `V(s₁)` is added back
//! after evaluation, so `[P̂V](s,a) = ⟨φ(s,a), w⟩ + V(s₁)` with
//! `w = Λ⁻¹ Σ_τ (V(s_{τ+1}) − V(s₁)) φ_τ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::mathcore::{dot, PsdMatrixState};

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTarget {
    /// `V(s_{τ+1})` for every recorded transition.
    pub values: Vec<f64>,
    /// `V(s₁)`
    pub anchor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FittedWeight {
    pub w: Vec<f64>,
    pub anchor: f64,
}

impl FittedWeight {
    pub fn zero(dim: usize, anchor: f64) -> Self {
        Self { w: vec![0.0; dim], anchor }
    }
}

pub fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(v)).iter().copied().collect()
}

/// `w = Λ⁻¹ Σ_τ (values[τ] − anchor)·feats[τ]`.
///
/// # Panics
///
/// Panics if the number of features and targets differ, or a feature has the
/// wrong dimension.
pub fn fit_weight(cov: &PsdMatrixState, feats: &[Vec<f64>], target: &RegressionTarget) -> FittedWeight {
    assert_eq!(
        feats.len(),
        target.values.len(),
        "fit_weight: {} features but {} targets",
        feats.len(),
        target.values.len()
    );
    let d = cov.dim();
    let mut moment = vec![0.0; d];
    for (phi, &v) in feats.iter().zip(&target.values) {
        assert_eq!(phi.len(), d, "fit_weight: feature dimension mismatch");
        let y = v - target.anchor;
        for (m, &p) in moment.iter_mut().zip(phi) {
            *m += y * p;
        }
    }
    FittedWeight { w: mat_vec(cov.inv(), &moment), anchor: target.anchor }
}

/// `⟨φ, w⟩ + anchor`. Not clipped.
pub fn phat_eval(fw: &FittedWeight, phi: &[f64]) -> f64 {
    dot(phi, &fw.w) + fw.anchor
}

/// Feature sums grouped by the observed next state.
///
/// Value functions change every planning pass but the data do not, so the
/// moment vector is assembled as `Σ_{s'} (V(s') − anchor) M_{s'}` with
/// `M_{s'} = Σ_{τ: s_{τ+1} = s'} φ_τ`. Next states are kept in order of first
/// appearance.
#[derive(Clone, Debug, Default)]
pub struct GroupedMoments {
    dim: usize,
    states: Vec<usize>,
    sums: Vec<Vec<f64>>,
    index: std::collections::HashMap<usize, usize>,
}

impl GroupedMoments {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    pub fn push(&mut self, phi: &[f64], next_state: usize) {
        assert_eq!(phi.len(), self.dim, "GroupedMoments: feature dimension mismatch");
        let k = match self.index.get(&next_state) {
            Some(&k) => k,
            None => {
                self.states.push(next_state);
                self.sums.push(vec![0.0; self.dim]);
                self.index.insert(next_state, self.states.len() - 1);
                self.states.len() - 1
            }
        };
        for (m, &p) in self.sums[k].iter_mut().zip(phi) {
            *m += p;
        }
    }

    /// Distinct next states in order of first appearance.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn sums(&self) -> &[Vec<f64>] {
        &self.sums
    }

    /// `z_{s'} = Λ⁻¹ M_{s'}` for every distinct next state.
    pub fn solved(&self, inv: &DMatrix<f64>) -> Vec<Vec<f64>> {
        self.sums.iter().map(|m| mat_vec(inv, m)).collect()
    }
}

/// `w = Σ_k (values[k] − anchor)·z[k]` for pre-solved directions `z`.
pub fn combine_solved(z: &[Vec<f64>], values: &[f64], anchor: f64, dim: usize) -> Vec<f64> {
    assert_eq!(z.len(), values.len(), "combine_solved: length mismatch");
    let mut w = vec![0.0; dim];
    for (zk, &v) in z.iter().zip(values) {
        let y = v - anchor;
        if y == 0.0 {
            continue;
        }
        for (wi, &zi) in w.iter_mut().zip(zk) {
            *wi += y * zi;
        }
    }
    w
}
