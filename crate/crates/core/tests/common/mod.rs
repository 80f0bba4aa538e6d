//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use conformal_arbitrage::domain::{DispatchDecision, Soc, StorageSpec};
use conformal_arbitrage::valuefn::{MarginalValueCurve, ValueCurve};
use rand::Rng;

/// Profit of moving from `from` to `to` at `price`, if the move is feasible.
pub fn move_profit(from: f64, to: f64, price: f64, spec: &StorageSpec) -> Option<f64> {
    let tol = 1e-9;
    let delta = to - from;
    if delta > 0.0 {
        let b = delta / spec.efficiency;
        (b <= spec.power_limit_per_step + tol).then(|| -price * b)
    } else if delta < 0.0 {
        let p = -delta * spec.efficiency;
        (p <= spec.power_limit_per_step + tol && price >= 0.0).then_some((price - spec.marginal_cost) * p)
    } else {
        Some(0.0)
    }
}

/// Best total profit plus terminal value over every path on `grid`, by
/// plain recursion (no memoization).
pub fn enumerate_best(prices: &[f64], e: f64, grid: &[f64], terminal: &ValueCurve, spec: &StorageSpec) -> f64 {
    match prices.split_first() {
        None => terminal.value_at(e),
        Some((&price, rest)) => grid
            .iter()
            .filter_map(|&to| {
                move_profit(e, to, price, spec).map(|r| r + enumerate_best(rest, to, grid, terminal, spec))
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Decisions spread evenly over the feasible range, `n` per direction.
pub fn decision_grid(soc: Soc, price: f64, spec: &StorageSpec, n: usize) -> Vec<DispatchDecision> {
    conformal_arbitrage::baselines::decision_grid(soc, price, spec, n)
}

/// Random non-increasing curve with `segments` pieces on `[0, cap]`.
pub fn random_curve<R: Rng>(rng: &mut R, cap: f64, segments: usize, lo: f64, hi: f64) -> MarginalValueCurve {
    let mut cuts: Vec<f64> = (1..segments).map(|_| rng.random_range(0.02..0.98) * cap).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * cap);
    let mut values: Vec<f64> = (0..=cuts.len()).map(|_| rng.random_range(lo..hi)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let mut bps = vec![0.0];
    bps.extend(cuts);
    bps.push(cap);
    MarginalValueCurve::new(bps, values).expect("valid random curve")
}

/// Random storage spec with `E = 1`.
pub fn random_spec<R: Rng>(rng: &mut R) -> StorageSpec {
    StorageSpec::new(
        rng.random_range(0.05..0.6),
        1.0,
        rng.random_range(0.7..1.0),
        rng.random_range(0.0..15.0),
        1.0,
    )
    .expect("valid spec")
}
