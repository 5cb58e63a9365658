use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a debiasing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebiasConfig {
    /// Largest allowed gap between group-conditional class means.
    pub epsilon: f64,
    /// ADMM step size.
    pub tau: f64,
    /// Weight of the quadratic regularizer; 1 recovers the squared loss.
    pub lambda: f64,
    pub max_rounds: usize,
    /// Early exit once `primal + dual <= residual_tol * sqrt(N * L)`.
    pub residual_tol: f64,
    /// Bracket width at which the anchor search stops.
    pub outer_tol: f64,
    /// Accepted distance between a group mean and its target.
    pub inner_tol: f64,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            tau: 0.5,
            lambda: 1.0,
            max_rounds: 100,
            residual_tol: 1e-6,
            outer_tol: 1e-9,
            inner_tol: 1e-10,
        }
    }
}

impl DebiasConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be a finite value >= 0");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be > 0");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be > 0");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be positive");
        }
        for (name, tol) in [
            ("residual_tol", self.residual_tol),
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
        ] {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}
