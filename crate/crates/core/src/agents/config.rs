use serde::{Deserialize, Serialize};

use super::AgentError;

/// Inputs shared by the value-iteration agents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// Span parameter `H`.
    pub h: f64,
    /// Bonus factor `β`.
    pub beta: f64,
    /// Horizon `T`.
    pub horizon: usize,
}

impl AgentConfig {
    /// `γ = 1 − √(1/T)`, `λ = 1`, `H = 2·sp(v*)`,
    /// `β = 2c_β·sp(v*)·d·√(ln(dT/δ))`.
    pub fn theorem_defaults(horizon: usize, dim: usize, span: f64, c_beta: f64, delta: f64) -> Self {
        Self {
            gamma: auto_gamma(horizon),
            lambda: 1.0,
            h: 2.0 * span,
            beta: theory_beta(horizon, dim, span, c_beta, delta),
            horizon,
        }
    }

    /// `1/(1−γ)`, the largest value any estimate may take.
    pub fn cap(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |what: &str| Err(AgentError::Config(what.to_string()));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(&format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(&format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.h >= 0.0) || !self.h.is_finite() {
            return bad(&format!("H must be nonnegative, got {}", self.h));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(&format!("beta must be nonnegative, got {}", self.beta));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        Ok(())
    }
}

pub fn auto_gamma(horizon: usize) -> f64 {
    1.0 - (1.0 / horizon as f64).sqrt()
}

pub fn theory_beta(horizon: usize, dim: usize, span: f64, c_beta: f64, delta: f64) -> f64 {
    let log_term = ((dim * horizon) as f64 / delta).ln().max(0.0);
    2.0 * c_beta * span * dim as f64 * log_term.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_defaults() {
        let c = AgentConfig::theorem_defaults(100, 4, 1.5, 0.01, 0.1);
        assert!((c.gamma - 0.9).abs() < 1e-15);
        assert!((c.cap() - 10.0).abs() < 1e-12);
        assert_eq!(c.h, 3.0);
        let expected = 2.0 * 0.01 * 1.5 * 4.0 * (4000f64).ln().sqrt();
        assert!((c.beta - expected).abs() < 1e-15);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation() {
        let good = AgentConfig { gamma: 0.5, lambda: 1.0, h: 1.0, beta: 0.0, horizon: 3 };
        assert!(good.validate().is_ok());
        assert!(AgentConfig { gamma: 1.0, ..good }.validate().is_err());
        assert!(AgentConfig { lambda: 0.0, ..good }.validate().is_err());
        assert!(AgentConfig { h: -1.0, ..good }.validate().is_err());
        assert!(AgentConfig { beta: f64::NAN, ..good }.validate().is_err());
        assert!(AgentConfig { horizon: 0, ..good }.validate().is_err());
    }
}
