//! Evaluators for the minimax error bounds on the MSE per entry and for
//! the Poisson tail bound.
//!
//! Logarithms are natural throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{hellinger_t, one_minus_exp_ratio};
use crate::region::FeasibleRegion;

pub const UPPER_PROBABILITY: &str = "with probability exceeding 1 - C/(d1 d2)";
pub const LOWER_PROBABILITY: &str = "with probability at least 3/4";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c_prime: f64,
    pub c1: f64,
    pub c2: f64,
    pub c0: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c_prime: 128.0 * (1.0 + 6f64.sqrt()) * std::f64::consts::E,
            c1: 1.0 / 256.0,
            c2: 1.0 / 4096.0,
            c0: 33.0,
        }
    }
}

impl BoundConstants {
    fn check(&self) -> Option<String> {
        let named = [
            ("c_prime", self.c_prime),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c0", self.c0),
        ];
        named
            .iter()
            .find(|(_, v)| !(*v > 0.0 && v.is_finite()))
            .map(|(n, v)| format!("constant {n} must be positive and finite, got {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Upper bound with the `sqrt(1 + (d1+d2) log(d1 d2) / m)` factor.
    UpperGeneral,
    /// Upper bound once `m >= (d1+d2) log(d1 d2)`, where that factor is
    /// replaced by `sqrt(2)`.
    UpperSimplified,
    /// Lower bound where the constant `c1` is the smaller branch.
    LowerConstant,
    /// Lower bound where `c2 alpha^{3/2} sqrt(r max(d1,d2) / m)` is smaller.
    LowerRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Formula value, computed even when `valid` is false.
    pub value: f64,
    pub regime: Regime,
    pub valid: bool,
    /// Every failed hypothesis, `; `-separated; empty when valid.
    pub reason: String,
    pub probability: String,
    pub constants: BoundConstants,
}

impl BoundReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }
}

fn shared_checks(region: &FeasibleRegion, m: f64, k: &BoundConstants) -> Vec<String> {
    let mut reasons = Vec::new();
    if let Err(e) = region.validate() {
        reasons.push(e.to_string());
    }
    if !(m > 0.0 && m.is_finite()) {
        reasons.push(format!("m must be positive, got {m}"));
    }
    if let Some(r) = k.check() {
        reasons.push(r);
    }
    reasons
}

/// The `8 alpha T / (1 - e^{-T})` factor, continuous at `T = 0`.
fn hellinger_factor(region: &FeasibleRegion) -> f64 {
    8.0 * region.alpha / one_minus_exp_ratio(hellinger_t(region))
}

/// Upper bound on the MSE per entry of the constrained ML estimator.
pub fn upper_bound(region: &FeasibleRegion, m: f64, k: &BoundConstants) -> BoundReport {
    let mut reasons = shared_checks(region, m, k);
    let (d1, d2) = (region.d1 as f64, region.d2 as f64);
    if m > d1 * d2 {
        reasons.push(format!("m={m} exceeds d1*d2={}", d1 * d2));
    }
    let log_d = (d1 * d2).ln();
    let e2 = std::f64::consts::E.powi(2);
    let core = k.c_prime
        * hellinger_factor(region)
        * (region.alpha * (region.r as f64).sqrt() / region.beta)
        * (region.alpha * (e2 - 2.0) + 3.0 * log_d)
        * ((d1 + d2) / m).sqrt();
    let threshold = (d1 + d2) * log_d;
    let (value, regime) = if m >= threshold {
        (std::f64::consts::SQRT_2 * core, Regime::UpperSimplified)
    } else {
        (core * (1.0 + threshold / m).sqrt(), Regime::UpperGeneral)
    };
    BoundReport {
        value,
        regime,
        valid: reasons.is_empty(),
        reason: reasons.join("; "),
        probability: UPPER_PROBABILITY.into(),
        constants: *k,
    }
}

/// Minimax lower bound, with every hypothesis it needs checked.
///
/// The value does not depend on `beta`; `beta` only enters the gates.
pub fn lower_bound(region: &FeasibleRegion, m: f64, k: &BoundConstants) -> BoundReport {
    let mut reasons = shared_checks(region, m, k);
    let r = region.r as f64;
    let (d_max, d_min) = (
        region.d1.max(region.d2) as f64,
        region.d1.min(region.d2) as f64,
    );
    let rate = k.c2 * region.alpha.powf(1.5) * (r * d_max / m).sqrt();
    let (value, regime) = if k.c1 <= rate {
        (k.c1, Regime::LowerConstant)
    } else {
        (rate, Regime::LowerRate)
    };
    if region.alpha < 1.0 {
        reasons.push(format!("requires alpha >= 1, got {}", region.alpha));
    }
    if region.r < 4 {
        reasons.push(format!("requires r >= 4, got {}", region.r));
    }
    if region.alpha < 2.0 * region.beta {
        reasons.push(format!(
            "requires alpha >= 2 beta, got alpha={} beta={}",
            region.alpha, region.beta
        ));
    }
    let size = region.alpha.powi(2) * r * d_max;
    if size < k.c0 {
        reasons.push(format!("requires alpha^2 r max(d1,d2) >= c0={}, got {size}", k.c0));
    }
    let floor = r * region.alpha.powi(2) / d_min;
    if !(value > floor) {
        reasons.push(format!("value {value} does not exceed r alpha^2 / min(d1,d2) = {floor}"));
    }
    BoundReport {
        value,
        regime,
        valid: reasons.is_empty(),
        reason: reasons.join("; "),
        probability: LOWER_PROBABILITY.into(),
        constants: *k,
    }
}

/// Ratio of the upper to the lower bound; both must be valid.
pub fn bound_gap(region: &FeasibleRegion, m: f64, k: &BoundConstants) -> Result<f64> {
    let up = upper_bound(region, m, k);
    if !up.valid {
        return Err(Error::InvalidRegime(format!("upper bound: {}", up.reason)));
    }
    let lo = lower_bound(region, m, k);
    if !lo.valid {
        return Err(Error::InvalidRegime(format!("lower bound: {}", lo.reason)));
    }
    Ok(up.value / lo.value)
}

/// `t0 = alpha (e^2 - 3)`; beyond it `P(Y - lambda >= t) <= e^{-t}` for
/// `Y ~ Poisson(lambda)`, `lambda <= alpha`.
pub fn poisson_tail_threshold(alpha: f64) -> f64 {
    alpha * (std::f64::consts::E.powi(2) - 3.0)
}

pub fn tail_bound(t: f64) -> f64 {
    (-t).exp()
}
