//! Closed-form threshold dispatch.
//!
//! Both policies compare the price against the marginal value curve at a
//! handful of SoC points and fall into one of five cases: full charge,
//! partial charge to the curve crossing, idle, partial discharge, full
//! discharge. The conformal policy evaluates charge thresholds against the
//! lower edge of the prediction set and discharge thresholds against the
//! upper edge, which widens the idle band by the set's half-width on each
//! side.

use serde::{Deserialize, Serialize};

use crate::domain::{DispatchDecision, Soc, StorageSpec};
use crate::stats::normal_quantile;
use crate::valuefn::{MarginalValueCurve, ValueCurve};

/// Smallest control value fed to the normal quantile.
pub const GAMMA_FLOOR: f64 = 1e-6;
/// Distance kept below 2 when clamping the control value from above.
pub const GAMMA_CEIL_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSetParams {
    /// Conformal control variable; never clamped outside [`halfwidth`].
    pub gamma: f64,
    /// Sensitivity in $/MWh.
    pub sigma: f64,
}

/// Half-width `σ · max(z_{1−γ′/2}, 0)` of the prediction set, where
/// `γ′ = clamp(γ, 1e-6, 2 − 1e-6)`. Zero whenever `γ′ ≥ 1`.
pub fn halfwidth(params: &PredictionSetParams) -> f64 {
    let g = params.gamma.clamp(GAMMA_FLOOR, 2.0 - GAMMA_CEIL_MARGIN);
    let z = normal_quantile(1.0 - g / 2.0);
    params.sigma * z.max(0.0)
}

/// The five-case threshold rule with the charge side evaluated on
/// `curve − charge_margin` and the discharge side on `curve + discharge_margin`.
///
/// Boundary equalities resolve to the earlier case in the order full charge,
/// partial charge, idle, partial discharge, full discharge. Discharge never
/// happens at a negative price.
pub fn threshold_dispatch(
    price: f64,
    soc_prev: Soc,
    curve: &MarginalValueCurve,
    charge_margin: f64,
    discharge_margin: f64,
    spec: &StorageSpec,
) -> DispatchDecision {
    let e = soc_prev.value();
    let eta = spec.efficiency;
    let p_max = spec.power_limit_per_step;
    let cap = curve.capacity();
    let lower = |x: f64| curve.value_at(x.min(cap)) - charge_margin;
    let upper = |x: f64| curve.value_at(x.max(0.0)) + discharge_margin;

    let charge_cap = ((spec.capacity - e) / eta).max(0.0);
    let discharge_cap = e * eta;

    if price <= lower(e + spec.charge_reach()) * eta {
        return DispatchDecision::charge(p_max.min(charge_cap));
    }
    if price <= lower(e) * eta {
        let target = curve.inverse(price / eta + charge_margin);
        let alpha = ((target - e) / eta).clamp(0.0, p_max);
        return DispatchDecision::charge(alpha.min(charge_cap));
    }
    let idle_high = (upper(e) / eta + spec.marginal_cost).max(0.0);
    if price <= idle_high {
        return DispatchDecision::IDLE;
    }
    let full_high = (upper(e - spec.discharge_reach()) / eta + spec.marginal_cost).max(0.0);
    if price <= full_high {
        let target = curve.inverse((price - spec.marginal_cost) * eta - discharge_margin);
        let beta = ((e - target) * eta).clamp(0.0, p_max);
        return DispatchDecision::discharge(beta.min(discharge_cap));
    }
    DispatchDecision::discharge(p_max.min(discharge_cap))
}

/// Optimal one-step decision against the forecast curve.
pub fn risk_neutral_policy(
    price: f64,
    soc_prev: Soc,
    curve: &MarginalValueCurve,
    spec: &StorageSpec,
) -> DispatchDecision {
    threshold_dispatch(price, soc_prev, curve, 0.0, 0.0, spec)
}

/// Threshold rule evaluated against the prediction set `curve ± w`.
pub fn conformal_policy(
    price: f64,
    soc_prev: Soc,
    curve: &MarginalValueCurve,
    params: &PredictionSetParams,
    spec: &StorageSpec,
) -> DispatchDecision {
    let w = halfwidth(params);
    threshold_dispatch(price, soc_prev, curve, w, w, spec)
}

/// Price interval `(low, high]` within which [`conformal_policy`] idles.
pub fn idle_band(
    soc_prev: Soc,
    curve: &MarginalValueCurve,
    params: &PredictionSetParams,
    spec: &StorageSpec,
) -> (f64, f64) {
    idle_band_for_width(soc_prev, curve, halfwidth(params), spec)
}

/// [`idle_band`] for an explicit half-width.
pub fn idle_band_for_width(
    soc_prev: Soc,
    curve: &MarginalValueCurve,
    width: f64,
    spec: &StorageSpec,
) -> (f64, f64) {
    let q = curve.value_at(soc_prev.value());
    let low = (q - width) * spec.efficiency;
    let high = ((q + width) / spec.efficiency + spec.marginal_cost).max(0.0);
    (low, high)
}

/// `λ(p − b) − C·p + Q(e')`: immediate profit plus value-to-go of the next SoC.
pub fn decision_value(
    price: f64,
    soc_prev: Soc,
    d: &DispatchDecision,
    value: &ValueCurve,
    spec: &StorageSpec,
) -> f64 {
    let next = soc_prev.value() + d.soc_delta(spec);
    crate::domain::step_profit(price, d, spec) + value.value_at(next)
}
