//! Termination thresholds `xi` on `|Cov_q|_2` for Filtering and No-regret.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which closed form produces `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdVariant {
    /// No-regret: `((2 eta + 7) / (3 (1 - (3 + eta) eps)))^2 (1 + d ln(d/delta)/(m eps)) s^2`.
    Eq1,
    /// As `Eq1` with denominator `1 - (6 + 2 eta) eps`, the form used in the
    /// guarantee for the same algorithm.
    Eq1Alt,
    /// Filtering: `2 (1 - eps) / (1 - 2 eps)^2 (1 + d ln(d/delta)/(m eps)) s^2`.
    Eq2,
    /// No-regret: `C1 / (1 - C2 (eps + ln(1/delta)/n)^2) (1 + (d ln d + ln(1/delta))/(m eps)) s^2`.
    Eq4,
    /// Filtering, same shape as `Eq4` with `C3`, `C4`.
    Eq5,
    /// Bucketed No-regret: `C (d + k) eta_t^2 sigma^2 / (m n)`.
    Eq6,
    /// Bucketed Filtering: `C (d + k) eta_t^2 sigma^2 / (m n)`.
    Eq7,
    /// Use the configured `xi` as is.
    Manual,
}

impl ThresholdVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eq1 => "eq1",
            Self::Eq1Alt => "eq1-alt",
            Self::Eq2 => "eq2",
            Self::Eq4 => "eq4",
            Self::Eq5 => "eq5",
            Self::Eq6 => "eq6",
            Self::Eq7 => "eq7",
            Self::Manual => "manual",
        }
    }
}

/// Unspecified universal constants in the threshold formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Multiplier for the bucketed forms.
    pub c_bucket: f64,
}

impl Default for ThresholdConstants {
    fn default() -> Self {
        Self {
            c1: 2.0,
            c2: 2.0,
            c3: 2.0,
            c4: 2.0,
            c_bucket: 2.0,
        }
    }
}

/// Everything a threshold formula may depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub epsilon: f64,
    /// No-regret step constant.
    pub eta: f64,
    /// Per-sample gradient noise scale.
    pub sigma: f64,
    pub d: usize,
    /// Number of clients.
    pub m: usize,
    /// Samples behind each aggregated row (may be fractional for bucket means).
    pub n: f64,
    pub delta: f64,
    /// Step size of the current round.
    pub eta_t: f64,
    /// Bucket count (bucketed forms only).
    pub k: usize,
    pub constants: ThresholdConstants,
    /// Lower clamp on `epsilon` for the `1/(m eps)` terms.
    pub eps_min: f64,
    /// Used when the variant is `Manual`.
    pub manual_xi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub xi: f64,
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

/// Evaluates the selected threshold formula.
pub fn compute_threshold(variant: ThresholdVariant, p: &ThresholdParams) -> Result<ThresholdSpec> {
    if variant == ThresholdVariant::Manual {
        let xi = p
            .manual_xi
            .ok_or_else(|| invalid("xi", "manual threshold requires `xi`".into()))?;
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(invalid("xi", format!("must be finite and non-negative, got {xi}")));
        }
        return Ok(ThresholdSpec { xi });
    }
    if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be finite and non-negative, got {}", p.sigma)));
    }
    if p.d == 0 || p.m == 0 || !(p.n > 0.0 && p.n.is_finite()) {
        return Err(invalid("d/m/n", "dimension and counts must be positive".into()));
    }
    if !(p.delta > 0.0 && p.delta <= 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1], got {}", p.delta)));
    }
    if !(p.epsilon >= 0.0 && p.epsilon < 0.5) {
        return Err(invalid("epsilon", format!("must lie in [0, 1/2), got {}", p.epsilon)));
    }

    let d = p.d as f64;
    let m = p.m as f64;
    let n = p.n;
    let s2 = p.eta_t * p.eta_t * p.sigma * p.sigma / n;
    let eps = p.epsilon.max(p.eps_min);
    let log_inv_delta = (1.0 / p.delta).ln();
    let sample_term = 1.0 + d * (d / p.delta).ln() / (m * eps);
    let improved_term = 1.0 + (d * d.ln() + log_inv_delta) / (m * eps);
    let c = p.constants;

    let breakdown = |variant: ThresholdVariant| Error::Breakdown {
        variant: variant.name(),
        epsilon: p.epsilon,
    };

    let xi = match variant {
        ThresholdVariant::Eq1 | ThresholdVariant::Eq1Alt => {
            if !(p.eta > 0.0 && p.eta < 1.0) {
                return Err(invalid("eta", format!("must lie in (0, 1), got {}", p.eta)));
            }
            let denom = if variant == ThresholdVariant::Eq1 {
                1.0 - (3.0 + p.eta) * eps
            } else {
                1.0 - (6.0 + 2.0 * p.eta) * eps
            };
            if denom <= 0.0 {
                return Err(breakdown(variant));
            }
            let lead = (2.0 * p.eta + 7.0) / (3.0 * denom);
            lead * lead * sample_term * s2
        }
        ThresholdVariant::Eq2 => {
            2.0 * (1.0 - eps) / (1.0 - 2.0 * eps).powi(2) * sample_term * s2
        }
        ThresholdVariant::Eq4 | ThresholdVariant::Eq5 => {
            let (ca, cb) = if variant == ThresholdVariant::Eq4 {
                (c.c1, c.c2)
            } else {
                (c.c3, c.c4)
            };
            let denom = 1.0 - cb * (eps + log_inv_delta / n).powi(2);
            if denom <= 0.0 {
                return Err(breakdown(variant));
            }
            ca / denom * improved_term * s2
        }
        ThresholdVariant::Eq6 | ThresholdVariant::Eq7 => {
            c.c_bucket * (d + p.k as f64) * p.eta_t * p.eta_t * p.sigma * p.sigma / (m * n)
        }
        ThresholdVariant::Manual => unreachable!(),
    };
    Ok(ThresholdSpec { xi })
}
