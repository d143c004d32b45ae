//! Closed-form constants of the iterative lp/thresholding estimator: the
//! breakdown curve `f(τ)`, the contraction factors `γ` and `β`, the iteration
//! schedule and the high-probability error bound used for report annotation.
//!
//! All logarithms are natural. Domain violations are errors, never clamped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Breakdown point of the thresholded estimator as a function of `τ ∈ (0, 1]`.
///
/// Evaluated in the rationalized form `2τ / (3 + τ + √(τ² + 2τ + 5))`, which
/// equals `(3τ + τ² − √(τ⁴ + 2τ³ + 5τ²)) / (2(1 + τ))` and stays accurate as
/// `τ → 0`.
pub fn f_tau(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::parameter(format!(
            "tau must lie in (0, 1], got {tau}"
        )));
    }
    Ok(2.0 * tau / (3.0 + tau + (tau * tau + 2.0 * tau + 5.0).sqrt()))
}

fn check_contraction_domain(eps: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::parameter(format!(
            "tau must lie in (0, 1], got {tau}"
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::parameter(format!("eps must be >= 0, got {eps}")));
    }
    let r = eps / tau;
    if !(r < 1.0) || !(eps + r < 1.0) {
        return Err(Error::parameter(format!(
            "eps={eps}, tau={tau} violates eps/tau < 1 and eps + eps/tau < 1"
        )));
    }
    Ok(r)
}

/// Contraction factor of the `c₂` recursion.
pub fn gamma(eps: f64, tau: f64) -> Result<f64> {
    let r = check_contraction_domain(eps, tau)?;
    Ok((r / ((1.0 - r) * (1.0 - eps - r))).sqrt())
}

/// Additive term of the `c₂` recursion.
pub fn beta(eps: f64, tau: f64, c1: f64) -> Result<f64> {
    let r = check_contraction_domain(eps, tau)?;
    if !(c1 > 0.0) {
        return Err(Error::parameter(format!("c1 must be > 0, got {c1}")));
    }
    Ok(c1 * ((1.0 - r).powf(-0.5) + (1.0 - eps).powf(-0.5)) * (r / (1.0 - eps - r)).sqrt())
}

/// Fixed point `β / (1 − γ)` of the recursion `c ↦ γc + β`.
pub fn c2_fixed_point(eps_check: f64, tau: f64, c1: f64) -> Result<f64> {
    let g = gamma(eps_check, tau)?;
    if g >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(beta(eps_check, tau, c1)? / (1.0 - g))
}

/// Number of outer iterations: `⌈1 + ln c₂⁽⁰⁾ / |ln γ(ε̌)|⌉`, or 1 when the
/// initial radius is already below the recursion's fixed point.
///
/// `c1` is needed for the case split through `β`.
pub fn schedule_t(c2_0: f64, eps_check: f64, tau: f64, c1: f64) -> Result<usize> {
    if !(c2_0 > 0.0) || !c2_0.is_finite() {
        return Err(Error::parameter(format!(
            "c2_0 must be finite and > 0, got {c2_0}"
        )));
    }
    let breakdown = f_tau(tau)?;
    if !(eps_check < breakdown) {
        return Err(Error::parameter(format!(
            "eps_check={eps_check} must be below the breakdown point f(tau)={breakdown:.6}"
        )));
    }
    let g = gamma(eps_check, tau)?;
    if g == 0.0 || c2_0 < c2_fixed_point(eps_check, tau, c1)? {
        return Ok(1);
    }
    let t = (1.0 + c2_0.ln() / g.ln().abs()).ceil();
    Ok(if t < 1.0 { 1 } else { t as usize })
}

/// Parameters entering the high-probability error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub c1: f64,
    pub sigma: f64,
    pub eps: f64,
    pub tau: f64,
}

impl TheoryParams {
    /// `c₁' = c₁² · min{c₁² ln c₁² + 1 − c₁², 1}`.
    pub fn c1_prime(&self) -> f64 {
        let s = self.c1 * self.c1;
        s * (s * s.ln() + 1.0 - s).min(1.0)
    }

    /// `α = e·d·ln(d/δ) / (n δ² c₁')`.
    pub fn alpha(&self) -> f64 {
        let d = self.d as f64;
        std::f64::consts::E * d * (d / self.delta).ln()
            / (self.n as f64 * self.delta * self.delta * self.c1_prime())
    }

    /// `ε' = ε + α`.
    pub fn eps_prime(&self) -> f64 {
        self.eps + self.alpha()
    }
}

/// Value of the bound; `vacuous` is set (and `value` is `+∞`) when one of
/// the constants leaves its domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEval {
    pub value: f64,
    pub vacuous: bool,
}

impl BoundEval {
    fn vacuous() -> Self {
        Self {
            value: f64::INFINITY,
            vacuous: true,
        }
    }
}

/// Right-hand side of the per-iterate error bound `‖x⁽ᵗ⁾ − μ‖₂ ≤ …` at
/// iteration `t ≥ 1`.
pub fn thm3_bound(params: &TheoryParams, eps_check: f64, t: usize, c2_0: f64) -> BoundEval {
    bound_terms(params, eps_check, t, c2_0).unwrap_or_else(BoundEval::vacuous)
}

fn bound_terms(p: &TheoryParams, eps_check: f64, t: usize, c2_0: f64) -> Option<BoundEval> {
    if t == 0 || p.n == 0 || p.d == 0 || !(p.sigma > 0.0) || !(p.c1 > 1.0) {
        return None;
    }
    if !(p.delta > 0.0 && p.delta < 1.0) || !(p.eps >= 0.0) {
        return None;
    }
    let c1p = p.c1_prime();
    let log_term = (p.d as f64 / p.delta).ln();
    if !(c1p > 0.0) || !(log_term > 0.0) {
        return None;
    }
    let alpha = p.alpha();
    let eps_p = p.eps + alpha;
    if !(alpha < 1.0) || !(eps_p <= eps_check) || !(eps_check < f_tau(p.tau).ok()?) {
        return None;
    }
    let g_check = gamma(eps_check, p.tau).ok()?;
    let b_check = beta(eps_check, p.tau, p.c1).ok()?;
    let g_p = gamma(eps_p, p.tau).ok()?;
    let b_p = beta(eps_p, p.tau, p.c1).ok()?;

    let decay = g_check.powi((t - 1) as i32);
    let radius = c2_0 * decay + (1.0 - decay) / (1.0 - g_check) * b_check;
    let value = p.sigma * (g_p * radius + b_p)
        + p.c1 * p.sigma * (p.eps / ((1.0 - alpha) * (1.0 - p.eps))).sqrt()
        + p.sigma
            * (alpha * p.delta).sqrt()
            * (1.0 + 2.0 * (c1p / (std::f64::consts::E * log_term)).sqrt());
    value.is_finite().then_some(BoundEval {
        value,
        vacuous: false,
    })
}
