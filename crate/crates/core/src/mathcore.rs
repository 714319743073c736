//! Scalar clipping, regularized covariance bookkeeping with an incrementally
//! maintained inverse, and the weighted norms built on top of it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Number of Sherman–Morrison updates between two direct re-inversions.
pub const REFRESH_INTERVAL: usize = 1000;

/// `Clip(x; lo, hi) = (x ∨ lo) ∧ hi` for a well-formed interval.
///
/// # Panics
///
/// Panics if `lo > hi`. Callers that legitimately clip against bounds that
/// may cross should use [`clip_unordered`].
pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi, "clip: lower bound {lo} exceeds upper bound {hi}");
    x.max(lo).min(hi)
}

/// `(x ∨ lo) ∧ hi` evaluated literally, without requiring `lo ≤ hi`.
///
/// When the bounds cross the upper bound wins.
#[inline]
pub fn clip_unordered(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// A clipping threshold that may still be at its "unset" (+∞) initial value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Unset,
    Finite(f64),
}

impl Threshold {
    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Unset => None,
            Threshold::Finite(v) => Some(v),
        }
    }

    /// Value with the sentinel mapped to +∞.
    pub fn as_f64(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    pub fn is_unset(self) -> bool {
        matches!(self, Threshold::Unset)
    }

    /// `x ∧ self`, treating an unset threshold as +∞.
    pub fn min_with(self, x: f64) -> Threshold {
        match self {
            Threshold::Unset => Threshold::Finite(x),
            Threshold::Finite(m) => Threshold::Finite(x.min(m)),
        }
    }

    /// `q − earlier + later`, the lower-bound shift used by deviation control.
    ///
    /// Any expression that involves an unset threshold is non-binding and
    /// evaluates to −∞.
    pub fn shifted(q: f64, earlier: Threshold, later: Threshold) -> f64 {
        match (earlier, later) {
            (Threshold::Finite(e), Threshold::Finite(l)) => q - e + l,
            _ => f64::NEG_INFINITY,
        }
    }

    /// `earlier − later`; +∞ when `earlier` is unset.
    pub fn gap(earlier: Threshold, later: Threshold) -> f64 {
        match (earlier, later) {
            (Threshold::Finite(e), Threshold::Finite(l)) => e - l,
            (Threshold::Unset, _) => f64::INFINITY,
            (Threshold::Finite(_), Threshold::Unset) => f64::NEG_INFINITY,
        }
    }
}

/// `φᵀ A φ` for a symmetric matrix `A`.
pub fn quad_form(a: &DMatrix<f64>, phi: &[f64]) -> f64 {
    let d = phi.len();
    assert_eq!(a.nrows(), d, "quad_form: dimension mismatch");
    let mut acc = 0.0;
    for j in 0..d {
        let pj = phi[j];
        if pj == 0.0 {
            continue;
        }
        let col = a.column(j);
        let mut inner = 0.0;
        for i in 0..d {
            inner += col[i] * phi[i];
        }
        acc += pj * inner;
    }
    acc
}

/// `‖φ‖_A = √(φᵀ A φ)`, with tiny negative round-off mapped to zero.
pub fn weighted_norm(a: &DMatrix<f64>, phi: &[f64]) -> f64 {
    quad_form(a, phi).max(0.0).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized covariance `Λ = λI + Σ φφᵀ` together with `Λ⁻¹` and `log det Λ`.
#[derive(Clone, Debug)]
pub struct PsdMatrixState {
    dim: usize,
    lambda: f64,
    mat: DMatrix<f64>,
    inv: DMatrix<f64>,
    logdet: f64,
    since_refresh: usize,
    updates: usize,
}

impl PsdMatrixState {
    pub fn new(dim: usize, lambda: f64) -> Self {
        assert!(dim > 0, "covariance dimension must be positive");
        assert!(lambda > 0.0, "regularizer must be positive, got {lambda}");
        Self {
            dim,
            lambda,
            mat: DMatrix::identity(dim, dim) * lambda,
            inv: DMatrix::identity(dim, dim) / lambda,
            logdet: dim as f64 * lambda.ln(),
            since_refresh: 0,
            updates: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn inv(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Number of nonzero rank-one updates applied so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// `√(φᵀ Λ⁻¹ φ)`.
    pub fn mahalanobis(&self, phi: &[f64]) -> f64 {
        assert_eq!(phi.len(), self.dim, "mahalanobis: dimension mismatch");
        weighted_norm(&self.inv, phi)
    }

    /// `Λ ← Λ + φφᵀ`. Returns `φᵀ Λ_old⁻¹ φ`, the elliptical-potential term.
    pub fn rank1_update(&mut self, phi: &[f64]) -> f64 {
        assert_eq!(phi.len(), self.dim, "rank1_update: dimension mismatch");
        if phi.iter().all(|&x| x == 0.0) {
            return 0.0;
        }
        let d = self.dim;
        let v: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| self.inv[(i, j)] * phi[j]).sum())
            .collect();
        let potential = dot(phi, &v).max(0.0);
        let denom = 1.0 + potential;
        for j in 0..d {
            for i in 0..d {
                self.inv[(i, j)] -= v[i] * v[j] / denom;
                self.mat[(i, j)] += phi[i] * phi[j];
            }
        }
        for j in 0..d {
            for i in (j + 1)..d {
                let s = 0.5 * (self.inv[(i, j)] + self.inv[(j, i)]);
                self.inv[(i, j)] = s;
                self.inv[(j, i)] = s;
            }
        }
        self.logdet += denom.ln();
        self.updates += 1;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh();
        }
        potential
    }

    /// Recomputes `Λ⁻¹` and `log det Λ` from `Λ` by Cholesky factorization.
    pub fn refresh(&mut self) {
        let chol = self
            .mat
            .clone()
            .cholesky()
            .expect("regularized covariance lost positive definiteness");
        self.logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        self.inv = chol.inverse();
        self.since_refresh = 0;
    }
}

/// Free-function form of [`PsdMatrixState::mahalanobis`].
pub fn mahalanobis(m: &PsdMatrixState, phi: &[f64]) -> f64 {
    m.mahalanobis(phi)
}
