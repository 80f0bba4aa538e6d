//! Storage unit parameters, state of charge, dispatch decisions and the
//! per-step dynamics every strategy shares.
//!
//! Energies are per interval throughout: `discharge` and `charge` are MWh
//! moved during one step, and `power_limit_per_step` is the MW rating already
//! multiplied by the interval length.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Bound, Error, Result};

/// Absolute slack used when re-validating decisions produced by policies.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    /// Maximum energy charged or discharged in one interval (MWh).
    pub power_limit_per_step: f64,
    /// Energy capacity (MWh).
    pub capacity: f64,
    /// One-way efficiency applied to both charging and discharging.
    pub efficiency: f64,
    /// Marginal discharge cost ($/MWh).
    pub marginal_cost: f64,
    /// Interval length in hours.
    pub interval_hours: f64,
}

impl StorageSpec {
    pub fn new(
        power_limit_per_step: f64,
        capacity: f64,
        efficiency: f64,
        marginal_cost: f64,
        interval_hours: f64,
    ) -> Result<Self> {
        let spec = Self {
            power_limit_per_step,
            capacity,
            efficiency,
            marginal_cost,
            interval_hours,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec from a MW rating; the per-step limit is `rating × interval_hours`.
    pub fn from_power_rating(
        power_rating_mw: f64,
        capacity: f64,
        efficiency: f64,
        marginal_cost: f64,
        interval_hours: f64,
    ) -> Result<Self> {
        Self::new(
            power_rating_mw * interval_hours,
            capacity,
            efficiency,
            marginal_cost,
            interval_hours,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("power_limit_per_step", self.power_limit_per_step)?;
        positive("capacity", self.capacity)?;
        positive("interval_hours", self.interval_hours)?;
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid(
                "efficiency",
                format!("must lie in (0, 1], got {}", self.efficiency),
            ));
        }
        if !(self.marginal_cost.is_finite() && self.marginal_cost >= 0.0) {
            return Err(Error::invalid(
                "marginal_cost",
                format!("must be finite and >= 0, got {}", self.marginal_cost),
            ));
        }
        Ok(())
    }

    /// SoC gained by charging at the full power limit.
    pub fn charge_reach(&self) -> f64 {
        self.power_limit_per_step * self.efficiency
    }

    /// SoC consumed by discharging at the full power limit.
    pub fn discharge_reach(&self) -> f64 {
        self.power_limit_per_step / self.efficiency
    }
}

/// Stored energy, always within `[0, capacity]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Soc(f64);

impl Soc {
    pub fn new(value: f64, spec: &StorageSpec) -> Result<Self> {
        if value.is_finite() && (0.0..=spec.capacity).contains(&value) {
            Ok(Soc(value))
        } else {
            Err(Error::SocOutOfRange {
                soc: value,
                capacity: spec.capacity,
            })
        }
    }

    /// Fraction of capacity, e.g. `0.5` for half full.
    pub fn from_fraction(fraction: f64, spec: &StorageSpec) -> Result<Self> {
        Self::new(fraction * spec.capacity, spec)
    }

    pub fn empty() -> Self {
        Soc(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub discharge: f64,
    pub charge: f64,
}

impl DispatchDecision {
    pub const IDLE: DispatchDecision = DispatchDecision {
        discharge: 0.0,
        charge: 0.0,
    };

    pub fn discharge(energy: f64) -> Self {
        Self {
            discharge: energy,
            charge: 0.0,
        }
    }

    pub fn charge(energy: f64) -> Self {
        Self {
            discharge: 0.0,
            charge: energy,
        }
    }

    /// Net energy sold to the grid (`discharge − charge`).
    pub fn net(&self) -> f64 {
        self.discharge - self.charge
    }

    pub fn is_idle(&self) -> bool {
        self.discharge == 0.0 && self.charge == 0.0
    }

    /// SoC change this decision causes, before any feasibility check.
    pub fn soc_delta(&self, spec: &StorageSpec) -> f64 {
        -self.discharge / spec.efficiency + self.charge * spec.efficiency
    }

    /// Checks the decision-only constraints (signs, power limit, exclusivity).
    pub fn validate(&self, spec: &StorageSpec) -> Result<()> {
        for v in [self.discharge, self.charge] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Infeasible {
                    bound: Bound::NegativeEnergy,
                    detail: format!("discharge={} charge={}", self.discharge, self.charge),
                });
            }
            if v > spec.power_limit_per_step + FEASIBILITY_TOL {
                return Err(Error::Infeasible {
                    bound: Bound::PowerLimit,
                    detail: format!("{v} > {}", spec.power_limit_per_step),
                });
            }
        }
        if self.discharge > 0.0 && self.charge > 0.0 {
            return Err(Error::Infeasible {
                bound: Bound::SimultaneousAction,
                detail: format!("discharge={} charge={}", self.discharge, self.charge),
            });
        }
        Ok(())
    }
}

/// Timestamped real-time prices ($/MWh).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    timestamps: Vec<NaiveDateTime>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(timestamps: Vec<NaiveDateTime>, prices: Vec<f64>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::LengthMismatch {
                what: "timestamps vs prices",
                left: timestamps.len(),
                right: prices.len(),
            });
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "timestamps",
                format!("not strictly increasing at index {}", i + 1),
            ));
        }
        if let Some(i) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid("prices", format!("non-finite value at index {i}")));
        }
        Ok(Self { timestamps, prices })
    }

    /// Series with evenly spaced timestamps starting at `start`.
    pub fn regular(start: NaiveDateTime, step: chrono::Duration, prices: Vec<f64>) -> Result<Self> {
        let timestamps = (0..prices.len() as i32).map(|i| start + step * i).collect();
        Self::new(timestamps, prices)
    }

    /// Regular 5-minute series from 2023-01-01, handy for tests and examples.
    pub fn from_prices(prices: Vec<f64>) -> Result<Self> {
        let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 1)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .expect("valid date");
        Self::regular(start, chrono::Duration::minutes(5), prices)
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn mean(&self) -> f64 {
        if self.prices.is_empty() {
            return 0.0;
        }
        self.prices.iter().sum::<f64>() / self.prices.len() as f64
    }

    /// Sub-series `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::IndexOutOfRange {
                index: end,
                len: self.len(),
            });
        }
        Ok(Self {
            timestamps: self.timestamps[start..end].to_vec(),
            prices: self.prices[start..end].to_vec(),
        })
    }
}

/// Largest feasible `(discharge, charge)` from `soc_prev` at `price`.
pub fn feasible_bounds(soc_prev: Soc, price: f64, spec: &StorageSpec) -> (f64, f64) {
    let e = soc_prev.value();
    let max_discharge = if price < 0.0 {
        0.0
    } else {
        spec.power_limit_per_step.min(e * spec.efficiency)
    };
    let max_charge = spec
        .power_limit_per_step
        .min((spec.capacity - e) / spec.efficiency)
        .max(0.0);
    (max_discharge, max_charge)
}

/// Next SoC after executing `d`; rejects decisions that leave `[0, E]`.
///
/// Results within [`FEASIBILITY_TOL`] of a bound are snapped onto it.
pub fn apply_decision(soc_prev: Soc, d: &DispatchDecision, spec: &StorageSpec) -> Result<Soc> {
    d.validate(spec)?;
    let next = soc_prev.value() + d.soc_delta(spec);
    if next < -FEASIBILITY_TOL {
        return Err(Error::Infeasible {
            bound: Bound::EmptyStorage,
            detail: format!("soc {} -> {next}", soc_prev.value()),
        });
    }
    if next > spec.capacity + FEASIBILITY_TOL {
        return Err(Error::Infeasible {
            bound: Bound::FullStorage,
            detail: format!("soc {} -> {next} > {}", soc_prev.value(), spec.capacity),
        });
    }
    Ok(Soc(next.clamp(0.0, spec.capacity)))
}

/// Same as [`apply_decision`] but also enforces the no-discharge-at-negative-price rule.
pub fn apply_decision_at_price(
    soc_prev: Soc,
    d: &DispatchDecision,
    price: f64,
    spec: &StorageSpec,
) -> Result<Soc> {
    if price < 0.0 && d.discharge > 0.0 {
        return Err(Error::Infeasible {
            bound: Bound::NegativePriceDischarge,
            detail: format!("price {price}, discharge {}", d.discharge),
        });
    }
    apply_decision(soc_prev, d, spec)
}

/// Revenue of one step net of discharge cost: `λ·(p − b) − C·p`.
pub fn step_profit(price: f64, d: &DispatchDecision, spec: &StorageSpec) -> f64 {
    price * (d.discharge - d.charge) - spec.marginal_cost * d.discharge
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec() -> StorageSpec {
        StorageSpec::new(0.5, 1.0, 0.9, 10.0, 1.0).unwrap()
    }

    #[test]
    fn apply_decision_examples() {
        let s = spec();
        let e = Soc::new(0.5, &s).unwrap();
        assert_eq!(apply_decision(e, &DispatchDecision::IDLE, &s).unwrap().value(), 0.5);
        let charged = apply_decision(e, &DispatchDecision::charge(0.5), &s).unwrap();
        assert_abs_diff_eq!(charged.value(), 0.95, epsilon = 1e-12);
        let emptied = apply_decision(e, &DispatchDecision::discharge(0.45), &s).unwrap();
        assert_abs_diff_eq!(emptied.value(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_decision_names_violated_bound() {
        let s = spec();
        let e = Soc::new(0.1, &s).unwrap();
        match apply_decision(e, &DispatchDecision::discharge(0.3), &s) {
            Err(Error::Infeasible { bound, .. }) => assert_eq!(bound, Bound::EmptyStorage),
            other => panic!("unexpected {other:?}"),
        }
        let full = Soc::new(0.9, &s).unwrap();
        match apply_decision(full, &DispatchDecision::charge(0.5), &s) {
            Err(Error::Infeasible { bound, .. }) => assert_eq!(bound, Bound::FullStorage),
            other => panic!("unexpected {other:?}"),
        }
        let both = DispatchDecision {
            discharge: 0.1,
            charge: 0.1,
        };
        assert!(matches!(
            apply_decision(e, &both, &s),
            Err(Error::Infeasible {
                bound: Bound::SimultaneousAction,
                ..
            })
        ));
        assert!(matches!(
            apply_decision(e, &DispatchDecision::charge(0.6), &s),
            Err(Error::Infeasible {
                bound: Bound::PowerLimit,
                ..
            })
        ));
        assert!(matches!(
            apply_decision_at_price(full, &DispatchDecision::discharge(0.1), -1.0, &s),
            Err(Error::Infeasible {
                bound: Bound::NegativePriceDischarge,
                ..
            })
        ));
    }

    #[test]
    fn step_profit_examples() {
        let s = spec();
        assert_abs_diff_eq!(step_profit(60.0, &DispatchDecision::discharge(0.45), &s), 22.5);
        assert_abs_diff_eq!(step_profit(30.0, &DispatchDecision::charge(0.5), &s), -15.0);
        assert_eq!(step_profit(123.4, &DispatchDecision::IDLE, &s), 0.0);
    }

    #[test]
    fn feasible_bounds_examples() {
        let s = spec();
        let half = Soc::new(0.5, &s).unwrap();
        let (d, c) = feasible_bounds(half, 50.0, &s);
        assert_abs_diff_eq!(d, 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 0.5, epsilon = 1e-12);
        assert_eq!(feasible_bounds(half, -5.0, &s), (0.0, 0.5));
        assert_eq!(feasible_bounds(Soc::empty(), 50.0, &s), (0.0, 0.5));
    }

    #[test]
    fn feasible_bounds_match_grid_enumeration() {
        // Enumerate a fine (p, b) grid and keep the largest feasible values.
        let s = spec();
        for &e in &[0.0, 0.05, 0.3, 0.5, 0.77, 0.96, 1.0] {
            let soc = Soc::new(e, &s).unwrap();
            let (max_d, max_c) = feasible_bounds(soc, 50.0, &s);
            let n = 5000;
            let mut best_d: f64 = 0.0;
            let mut best_c: f64 = 0.0;
            for i in 0..=n {
                let x = s.power_limit_per_step * i as f64 / n as f64;
                if e - x / s.efficiency >= -1e-12 {
                    best_d = best_d.max(x);
                }
                if e + x * s.efficiency <= s.capacity + 1e-12 {
                    best_c = best_c.max(x);
                }
            }
            let step = s.power_limit_per_step / n as f64;
            assert!((max_d - best_d).abs() <= step, "e={e}");
            assert!((max_c - best_c).abs() <= step, "e={e}");
        }
    }

    #[test]
    fn round_trip_delivers_eta_squared() {
        let s = spec();
        let e0 = Soc::new(0.2, &s).unwrap();
        let bought = 0.4;
        let e1 = apply_decision(e0, &DispatchDecision::charge(bought), &s).unwrap();
        let sold = (e1.value() - e0.value()) * s.efficiency;
        let e2 = apply_decision(e1, &DispatchDecision::discharge(sold), &s).unwrap();
        assert_abs_diff_eq!(e2.value(), e0.value(), epsilon = 1e-12);
        assert_abs_diff_eq!(sold, bought * s.efficiency.powi(2), epsilon = 1e-12);
    }

    #[test]
    fn spec_rejects_bad_parameters() {
        assert!(StorageSpec::new(0.0, 1.0, 0.9, 0.0, 1.0).is_err());
        assert!(StorageSpec::new(0.5, 1.0, 1.2, 0.0, 1.0).is_err());
        assert!(StorageSpec::new(0.5, 1.0, 0.9, -1.0, 1.0).is_err());
        let s = StorageSpec::from_power_rating(0.5, 1.0, 0.9, 0.0, 5.0 / 60.0).unwrap();
        assert_abs_diff_eq!(s.power_limit_per_step, 0.5 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn price_series_validation() {
        assert!(PriceSeries::from_prices(vec![1.0, f64::NAN]).is_err());
        let ts = PriceSeries::from_prices(vec![1.0, 2.0]).unwrap();
        let rev: Vec<_> = ts.timestamps().iter().rev().cloned().collect();
        assert!(PriceSeries::new(rev, vec![1.0, 2.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn feasible_trajectories_stay_in_bounds(
                e0 in 0.0f64..1.0,
                actions in prop::collection::vec((-60.0f64..120.0, 0.0f64..1.0, any::<bool>()), 1..60),
            ) {
                let s = spec();
                let mut soc = Soc::new(e0, &s).unwrap();
                for (price, frac, sell) in actions {
                    let (max_d, max_c) = feasible_bounds(soc, price, &s);
                    let d = if sell {
                        DispatchDecision::discharge(frac * max_d)
                    } else {
                        DispatchDecision::charge(frac * max_c)
                    };
                    soc = apply_decision_at_price(soc, &d, price, &s).unwrap();
                    prop_assert!(soc.value() >= 0.0 && soc.value() <= s.capacity);
                }
            }

            #[test]
            fn step_profit_is_linear(price in -100.0f64..300.0, a in 0.0f64..0.5, b in 0.0f64..0.5, k in 0.0f64..1.0) {
                let s = spec();
                let d1 = DispatchDecision::discharge(a);
                let d2 = DispatchDecision::charge(b);
                let scaled = DispatchDecision::discharge(k * a);
                prop_assert!((step_profit(price, &scaled, &s) - k * step_profit(price, &d1, &s)).abs() < 1e-9);
                let sum = step_profit(price, &d1, &s) + step_profit(price, &d2, &s);
                let direct = price * (a - b) - s.marginal_cost * a;
                prop_assert!((sum - direct).abs() < 1e-9);
            }
        }
    }
}
