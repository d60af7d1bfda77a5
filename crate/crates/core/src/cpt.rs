//! Value, probability-weighting and utility functions of cumulative
//! prospect theory for two-outcome prospects, plus the model-implied
//! certainty equivalent.
//!
//! Utility is the separable sum `w(p_low) v(x_low) + w(p_high) v(x_high)`,
//! not the rank-dependent form. For same-sign prospects with two non-zero
//! outcomes the two differ.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A two-outcome gamble: `outcome_low` with probability `1 - p_high`,
/// `outcome_high` with probability `p_high`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prospect {
    pub id: String,
    pub outcome_low: f64,
    pub outcome_high: f64,
    pub p_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProspectKind {
    GainsOnly,
    LossesOnly,
    Mixed,
}

impl Prospect {
    pub fn new(id: impl Into<String>, outcome_low: f64, outcome_high: f64, p_high: f64) -> Self {
        Self {
            id: id.into(),
            outcome_low,
            outcome_high,
            p_high,
        }
    }

    pub fn p_low(&self) -> f64 {
        1.0 - self.p_high
    }

    pub fn expected_value(&self) -> f64 {
        self.p_low() * self.outcome_low + self.p_high * self.outcome_high
    }

    /// Gains-only and losses-only overlap when both outcomes are zero; such a
    /// prospect reports `GainsOnly`.
    pub fn kind(&self) -> ProspectKind {
        let (a, b) = (self.outcome_low, self.outcome_high);
        if (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) {
            ProspectKind::Mixed
        } else if a >= 0.0 && b >= 0.0 {
            ProspectKind::GainsOnly
        } else {
            ProspectKind::LossesOnly
        }
    }

    pub fn is_mixed(&self) -> bool {
        self.kind() == ProspectKind::Mixed
    }

    pub fn is_valid(&self) -> bool {
        self.outcome_low.is_finite()
            && self.outcome_high.is_finite()
            && (0.0..=1.0).contains(&self.p_high)
    }

    /// Whether the prospect has a genuinely risky outcome of the given sign,
    /// i.e. one that is reached with probability strictly between 0 and 1.
    pub fn has_risky_outcome(&self, negative: bool) -> bool {
        if self.p_high <= 0.0 || self.p_high >= 1.0 {
            return false;
        }
        let matches = |x: f64| if negative { x < 0.0 } else { x > 0.0 };
        matches(self.outcome_low) || matches(self.outcome_high)
    }
}

/// CPT parameter vector. All components must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl CptParams {
    pub const NAMES: [&'static str; 5] = ["alpha", "beta", "lambda", "gamma_plus", "gamma_minus"];

    pub const fn new(
        alpha: f64,
        beta: f64,
        lambda: f64,
        gamma_plus: f64,
        gamma_minus: f64,
    ) -> Self {
        Self {
            alpha,
            beta,
            lambda,
            gamma_plus,
            gamma_minus,
        }
    }

    /// Expected-value maximiser: every parameter equal to one.
    pub const fn risk_neutral() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0, 1.0)
    }

    /// Tversky & Kahneman (1992) median estimates.
    pub const fn tk_median() -> Self {
        Self::new(0.88, 0.88, 2.25, 0.61, 0.69)
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.alpha,
            self.beta,
            self.lambda,
            self.gamma_plus,
            self.gamma_minus,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

impl Default for CptParams {
    fn default() -> Self {
        Self::tk_median()
    }
}

impl fmt::Display for CptParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "alpha={:.4} beta={:.4} lambda={:.4} gamma+={:.4} gamma-={:.4}",
            self.alpha, self.beta, self.lambda, self.gamma_plus, self.gamma_minus
        )
    }
}

/// Subjective utility of a prospect.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Utility(pub f64);

impl Utility {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `x^alpha` for gains, `-lambda (-x)^beta` for losses.
pub fn value(x: f64, params: &CptParams) -> f64 {
    if x >= 0.0 {
        x.powf(params.alpha)
    } else {
        -params.lambda * (-x).powf(params.beta)
    }
}

/// Tversky-Kahneman weighting `p^g / (p^g + (1-p)^g)^(1/g)`.
///
/// The endpoints are returned exactly.
pub fn weight(p: f64, gamma: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let num = p.powf(gamma);
    let den = (num + (1.0 - p).powf(gamma)).powf(1.0 / gamma);
    num / den
}

fn weight_for(x: f64, p: f64, params: &CptParams) -> f64 {
    // zero outcomes take gamma_plus; their value is zero either way
    let gamma = if x >= 0.0 {
        params.gamma_plus
    } else {
        params.gamma_minus
    };
    weight(p, gamma)
}

pub fn utility(prospect: &Prospect, params: &CptParams) -> Utility {
    let low = weight_for(prospect.outcome_low, prospect.p_low(), params)
        * value(prospect.outcome_low, params);
    let high = weight_for(prospect.outcome_high, prospect.p_high, params)
        * value(prospect.outcome_high, params);
    Utility(low + high)
}

/// Inverse of [`value`].
pub fn inverse_value(u: f64, params: &CptParams) -> f64 {
    if u >= 0.0 {
        u.powf(1.0 / params.alpha)
    } else {
        -(-u / params.lambda).powf(1.0 / params.beta)
    }
}

/// Certainty equivalent implied by the model: `v^-1(u(P))`.
pub fn model_ce(prospect: &Prospect, params: &CptParams) -> f64 {
    inverse_value(utility(prospect, params).value(), params)
}
