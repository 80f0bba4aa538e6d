//! Comparison strategies: CVaR over forecast scenarios, rolling-horizon
//! chance-constrained and robust lookahead, and a switching-cost penalty.
//!
//! The chance-constrained and robust programs share one structure. With
//! profit linear in the uncertain prices, both become
//! `max_x  λ̂·x − C·p + Q̂(e_H) − κ‖x_{1..H−1}‖` where `x_k = p_k − b_k`
//! and the first price is already observed. The norm term is handled by the
//! variational bound `‖x‖ = min_τ>0 (‖x‖²/(2τ) + τ/2)`: for fixed τ the
//! problem separates over steps and is solved by dynamic programming on an
//! SoC grid, and τ is searched outside.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dispatch::{risk_neutral_policy, threshold_dispatch};
use crate::domain::{feasible_bounds, step_profit, DispatchDecision, Soc, StorageSpec};
use crate::error::{Error, Result};
use crate::stats::normal_quantile;
use crate::valuefn::{backward_induct, MarginalValueCurve, ValueCurve};

pub const DEFAULT_DECISION_GRID: usize = 201;
pub const DEFAULT_SOC_GRID: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvarConfig {
    /// Weight μ on the CVaR term.
    pub mu: f64,
    /// Confidence ν.
    pub nu: f64,
    pub scenario_count: usize,
    pub scenario_seed: u64,
    /// Standard deviation of the scenario perturbation ($/MWh).
    pub scenario_spread: f64,
    pub decision_grid: usize,
}

impl Default for CvarConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            nu: 0.95,
            scenario_count: 20,
            scenario_seed: 0,
            scenario_spread: 10.0,
            decision_grid: DEFAULT_DECISION_GRID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChanceConfig {
    /// Required probability Γ that realized profit reaches the target.
    pub gamma_threshold: f64,
    pub lookahead: usize,
    /// Standard deviation of each future price around its forecast.
    pub price_std: f64,
    pub soc_grid: usize,
}

impl Default for ChanceConfig {
    fn default() -> Self {
        Self {
            gamma_threshold: 0.6,
            lookahead: 12,
            price_std: 10.0,
            soc_grid: DEFAULT_SOC_GRID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    /// Ellipsoid radius in units of `ellipsoid_radius_scale`.
    pub gamma_threshold: f64,
    pub lookahead: usize,
    pub ellipsoid_radius_scale: f64,
    pub soc_grid: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            gamma_threshold: 1.0,
            lookahead: 12,
            ellipsoid_radius_scale: 10.0,
            soc_grid: DEFAULT_SOC_GRID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchingConfig {
    /// Penalty ζ per MWh of SoC movement.
    pub zeta: f64,
}

impl Default for SwitchingConfig {
    fn default() -> Self {
        Self { zeta: 400.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub cvar: CvarConfig,
    pub chance: ChanceConfig,
    pub robust: RobustConfig,
    pub switching: SwitchingConfig,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.cvar;
        if !(0.0..=1.0).contains(&c.mu) {
            return Err(Error::invalid("cvar.mu", "must lie in [0, 1]"));
        }
        if !(c.nu > 0.0 && c.nu < 1.0) {
            return Err(Error::invalid("cvar.nu", "must lie in (0, 1)"));
        }
        if c.scenario_count == 0 {
            return Err(Error::invalid("cvar.scenario_count", "must be >= 1"));
        }
        if !(c.scenario_spread.is_finite() && c.scenario_spread >= 0.0) {
            return Err(Error::invalid("cvar.scenario_spread", "must be finite and >= 0"));
        }
        if c.decision_grid < 2 {
            return Err(Error::invalid("cvar.decision_grid", "must be >= 2"));
        }
        let ch = &self.chance;
        if !(ch.gamma_threshold > 0.0 && ch.gamma_threshold < 1.0) {
            return Err(Error::invalid("chance.gamma_threshold", "must lie in (0, 1)"));
        }
        if ch.lookahead == 0 || self.robust.lookahead == 0 {
            return Err(Error::invalid("lookahead", "must be >= 1"));
        }
        if !(ch.price_std.is_finite() && ch.price_std >= 0.0) {
            return Err(Error::invalid("chance.price_std", "must be finite and >= 0"));
        }
        let r = &self.robust;
        if !(r.gamma_threshold.is_finite() && r.gamma_threshold >= 0.0) {
            return Err(Error::invalid("robust.gamma_threshold", "must be finite and >= 0"));
        }
        if !(r.ellipsoid_radius_scale.is_finite() && r.ellipsoid_radius_scale >= 0.0) {
            return Err(Error::invalid("robust.ellipsoid_radius_scale", "must be finite and >= 0"));
        }
        if ch.soc_grid < 2 || r.soc_grid < 2 {
            return Err(Error::invalid("soc_grid", "must be >= 2"));
        }
        if !(self.switching.zeta.is_finite() && self.switching.zeta >= 0.0) {
            return Err(Error::invalid("switching.zeta", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A forecast curve variant with its probability weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub weight: f64,
    pub curve: MarginalValueCurve,
}

/// Equal-weight scenarios: `q_hat` plus a seeded level shift and per-segment
/// noise, monotone-repaired. Deterministic in `(seed, t)`.
pub fn cvar_scenarios(q_hat: &MarginalValueCurve, t: usize, cfg: &CvarConfig) -> Result<Vec<Scenario>> {
    use crate::forecaster::{NoisyOracle, NoisyOracleConfig};
    let noise = NoisyOracleConfig {
        noise_scale: cfg.scenario_spread,
        seed: cfg
            .scenario_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(t as u64),
        ..Default::default()
    };
    let oracle = NoisyOracle::new(noise, q_hat.capacity(), cfg.scenario_count, 0.0)?;
    let w = 1.0 / cfg.scenario_count as f64;
    (0..cfg.scenario_count)
        .map(|k| {
            Ok(Scenario {
                weight: w,
                curve: oracle.perturb(k, q_hat)?,
            })
        })
        .collect()
}

/// Exact CVaR of a discrete reward distribution at level ν (lower tail):
/// `max_v  v − (1/(1−ν)) Σ ϱ_ω [v − V_ω]^+`, attained at one of the `V_ω`.
pub fn cvar(values: &[f64], weights: &[f64], nu: f64) -> f64 {
    let scale = 1.0 / (1.0 - nu);
    values
        .iter()
        .map(|&v| {
            let shortfall: f64 = values
                .iter()
                .zip(weights)
                .map(|(&x, &w)| w * (v - x).max(0.0))
                .sum();
            v - scale * shortfall
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Candidate decisions: idle plus `n` evenly spaced charge and discharge levels.
pub fn decision_grid(soc_prev: Soc, price: f64, spec: &StorageSpec, n: usize) -> Vec<DispatchDecision> {
    let (max_d, max_c) = feasible_bounds(soc_prev, price, spec);
    let mut out = vec![DispatchDecision::IDLE];
    let steps = (n - 1) as f64;
    for k in 1..n {
        let f = k as f64 / steps;
        if max_c > 0.0 {
            out.push(DispatchDecision::charge(max_c * f));
        }
        if max_d > 0.0 {
            out.push(DispatchDecision::discharge(max_d * f));
        }
    }
    out
}

/// Objective of [`cvar_policy`] for one decision.
pub fn cvar_objective(
    price: f64,
    soc_prev: Soc,
    d: &DispatchDecision,
    scenarios: &[(f64, ValueCurve)],
    mu: f64,
    nu: f64,
    spec: &StorageSpec,
) -> f64 {
    let e = soc_prev.value();
    let next = (e + d.soc_delta(spec)).clamp(0.0, spec.capacity);
    let profit = step_profit(price, d, spec);
    let values: Vec<f64> = scenarios
        .iter()
        .map(|(_, q)| profit + q.value_at(next) - q.value_at(e))
        .collect();
    let weights: Vec<f64> = scenarios.iter().map(|(w, _)| *w).collect();
    let mean: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    if mu == 0.0 {
        mean
    } else {
        mean + mu * cvar(&values, &weights, nu)
    }
}

/// Decision-grid maximizer of expected value plus `μ·CVaR_ν` across scenarios.
pub fn cvar_policy(
    price: f64,
    soc_prev: Soc,
    scenarios: &[Scenario],
    cfg: &CvarConfig,
    spec: &StorageSpec,
) -> Result<DispatchDecision> {
    if scenarios.is_empty() {
        return Err(Error::EmptyInput("cvar scenarios"));
    }
    let total: f64 = scenarios.iter().map(|s| s.weight).sum();
    if (total - 1.0).abs() > 1e-9 || scenarios.iter().any(|s| s.weight < 0.0) {
        return Err(Error::invalid("scenario weights", format!("must be >= 0 and sum to 1, got {total}")));
    }
    let integrated: Vec<(f64, ValueCurve)> = scenarios
        .iter()
        .map(|s| (s.weight, s.curve.integrate()))
        .collect();
    let mut best = (DispatchDecision::IDLE, f64::NEG_INFINITY);
    for d in decision_grid(soc_prev, price, spec, cfg.decision_grid) {
        let v = cvar_objective(price, soc_prev, &d, &integrated, cfg.mu, cfg.nu, spec);
        if v > best.1 + 1e-12 {
            best = (d, v);
        }
    }
    Ok(best.0)
}

/// Exact optimum of the deterministic lookahead over `window` (first entry is
/// the observed price) with value-to-go `terminal` after the window.
pub fn deterministic_lookahead(
    window: &[f64],
    soc_prev: Soc,
    terminal: &MarginalValueCurve,
    spec: &StorageSpec,
) -> Result<DispatchDecision> {
    if window.is_empty() {
        return Err(Error::EmptyInput("lookahead window"));
    }
    let curves = backward_induct(window, spec, terminal, None)?;
    Ok(risk_neutral_policy(window[0], soc_prev, &curves[1], spec))
}

/// A plan on the SoC grid and its exact penalized objective.
#[derive(Debug, Clone)]
struct Plan {
    socs: Vec<f64>,
    objective: f64,
}

struct GridProblem<'a> {
    window: &'a [f64],
    kappa: f64,
    terminal: ValueCurve,
    grid: Vec<f64>,
    spec: &'a StorageSpec,
}

impl GridProblem<'_> {
    /// Net energy sold `x = p − b` and the discharge `p` for a SoC move, if feasible.
    fn transition(&self, k: usize, from: f64, to: f64) -> Option<(f64, f64)> {
        let s = self.spec;
        let delta = to - from;
        let tol = 1e-9 * s.capacity.max(1.0);
        if delta > 0.0 {
            let b = delta / s.efficiency;
            (b <= s.power_limit_per_step + tol).then_some((-b, 0.0))
        } else if delta < 0.0 {
            let p = -delta * s.efficiency;
            (p <= s.power_limit_per_step + tol && self.window[k] >= 0.0).then_some((p, p))
        } else {
            Some((0.0, 0.0))
        }
    }

    fn plan_flows(&self, socs: &[f64]) -> Vec<(f64, f64)> {
        socs.windows(2)
            .enumerate()
            .map(|(k, w)| self.transition(k, w[0], w[1]).expect("plan transitions are feasible"))
            .collect()
    }

    /// Exact objective `λ̂·x − C·p + Q(e_H) − κ‖x_{1..}‖`, with prices optionally tilted.
    fn objective(&self, socs: &[f64]) -> f64 {
        let flows = self.plan_flows(socs);
        let linear: f64 = flows
            .iter()
            .zip(self.window)
            .map(|(&(x, p), &l)| l * x - self.spec.marginal_cost * p)
            .sum();
        let norm = flows[1..].iter().map(|(x, _)| x * x).sum::<f64>().sqrt();
        linear + self.terminal.value_at(*socs.last().expect("non-empty")) - self.kappa * norm
    }

    /// DP maximizing `Σ (λ̂_k + tilt_k)·x_k − C·p_k − quad·x_k²` (quadratic and tilt on k ≥ 1).
    fn solve(&self, e0: f64, quad: f64, tilt: &[f64]) -> Vec<f64> {
        let h = self.window.len();
        let g = &self.grid;
        let n = g.len();
        let mut value: Vec<f64> = g.iter().map(|&e| self.terminal.value_at(e)).collect();
        let mut choice = vec![vec![0usize; n]; h];
        let reward = |k: usize, x: f64, p: f64| {
            let mut r = self.window[k] * x - self.spec.marginal_cost * p;
            if k > 0 {
                r += tilt[k] * x - quad * x * x;
            }
            r
        };
        for k in (1..h).rev() {
            let mut next = vec![f64::NEG_INFINITY; n];
            for i in 0..n {
                for j in 0..n {
                    if let Some((x, p)) = self.transition(k, g[i], g[j]) {
                        let v = reward(k, x, p) + value[j];
                        if v > next[i] {
                            next[i] = v;
                            choice[k][i] = j;
                        }
                    }
                }
            }
            value = next;
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for j in 0..n {
            if let Some((x, p)) = self.transition(0, e0, g[j]) {
                let v = reward(0, x, p) + value[j];
                if v > best.0 {
                    best = (v, j);
                }
            }
        }
        let mut socs = vec![e0, g[best.1]];
        let mut idx = best.1;
        for row in choice.iter().skip(1) {
            idx = row[idx];
            socs.push(g[idx]);
        }
        socs
    }

    fn plan(&self, socs: Vec<f64>) -> Plan {
        let objective = self.objective(&socs);
        Plan { socs, objective }
    }
}

/// SoC grid: uniform points plus the points reachable from `e0` in whole
/// power-limit steps.
fn soc_grid(e0: f64, spec: &StorageSpec, points: usize, horizon: usize) -> Vec<f64> {
    let cap = spec.capacity;
    let mut g: Vec<f64> = (0..points)
        .map(|k| cap * k as f64 / (points - 1) as f64)
        .collect();
    g.push(e0);
    for k in 1..=horizon {
        g.push((e0 + k as f64 * spec.charge_reach()).min(cap));
        g.push((e0 - k as f64 * spec.discharge_reach()).max(0.0));
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * cap.max(1.0));
    g
}

/// Maximizes `λ̂·x − C·p + Q(e_H) − κ‖x_{1..H−1}‖` over grid plans and
/// returns the first-step decision. `κ = 0` is solved exactly off-grid.
pub fn penalized_lookahead(
    window: &[f64],
    soc_prev: Soc,
    terminal: &MarginalValueCurve,
    kappa: f64,
    soc_points: usize,
    spec: &StorageSpec,
) -> Result<DispatchDecision> {
    if window.is_empty() {
        return Err(Error::EmptyInput("lookahead window"));
    }
    if !kappa.is_finite() {
        return Err(Error::invalid("kappa", "must be finite"));
    }
    if kappa == 0.0 || window.len() == 1 {
        return deterministic_lookahead(window, soc_prev, terminal, spec);
    }
    let e0 = soc_prev.value();
    let h = window.len();
    let problem = GridProblem {
        window,
        kappa,
        terminal: terminal.integrate(),
        grid: soc_grid(e0, spec, soc_points, h),
        spec,
    };
    let zero = vec![0.0; h];
    let mut best = problem.plan(problem.solve(e0, 0.0, &zero));

    if kappa > 0.0 {
        // outer search over τ, then majorize-minimize from the best plan
        let x_max = spec.power_limit_per_step.max(spec.discharge_reach()) * ((h - 1) as f64).sqrt();
        let taus = (0..24).map(|k| x_max * 10f64.powf(-3.0 + 3.0 * k as f64 / 23.0));
        for tau in taus {
            let cand = problem.plan(problem.solve(e0, kappa / (2.0 * tau), &zero));
            if cand.objective > best.objective {
                best = cand;
            }
        }
        for _ in 0..50 {
            let norm = norm_tail(&problem, &best.socs);
            if norm == 0.0 {
                break;
            }
            let cand = problem.plan(problem.solve(e0, kappa / (2.0 * norm), &zero));
            if cand.objective <= best.objective + 1e-12 {
                break;
            }
            best = cand;
        }
    } else {
        // convex penalty: linearize the norm at the current plan
        for _ in 0..50 {
            let flows = problem.plan_flows(&best.socs);
            let norm = norm_tail(&problem, &best.socs);
            if norm == 0.0 {
                break;
            }
            let tilt: Vec<f64> = flows
                .iter()
                .enumerate()
                .map(|(k, (x, _))| if k == 0 { 0.0 } else { -kappa * x / norm })
                .collect();
            let cand = problem.plan(problem.solve(e0, 0.0, &tilt));
            if cand.objective <= best.objective + 1e-12 {
                break;
            }
            best = cand;
        }
    }
    let (x, _) = problem
        .transition(0, best.socs[0], best.socs[1])
        .expect("first move is feasible");
    let (max_d, max_c) = feasible_bounds(soc_prev, window[0], spec);
    let snap = |v: f64, hi: f64| if (v - hi).abs() <= 1e-9 * hi.max(1.0) { hi } else { v.min(hi) };
    Ok(if x > 0.0 {
        DispatchDecision::discharge(snap(x, max_d))
    } else if x < 0.0 {
        DispatchDecision::charge(snap(-x, max_c))
    } else {
        DispatchDecision::IDLE
    })
}

fn norm_tail(problem: &GridProblem<'_>, socs: &[f64]) -> f64 {
    problem.plan_flows(socs)[1..]
        .iter()
        .map(|(x, _)| x * x)
        .sum::<f64>()
        .sqrt()
}

fn truncate_window(window: &[f64], lookahead: usize) -> Result<&[f64]> {
    if window.is_empty() {
        return Err(Error::EmptyInput("lookahead window"));
    }
    if lookahead > window.len() {
        log::warn!(
            "lookahead {lookahead} exceeds the remaining horizon; truncated to {}",
            window.len()
        );
    }
    Ok(&window[..lookahead.min(window.len())])
}

/// Rolling-horizon chance-constrained decision: maximizes the Γ-quantile of
/// window profit with future prices `N(forecast, price_std²)` independent.
pub fn chance_constrained_policy(
    forecast_window: &[f64],
    soc_prev: Soc,
    terminal: &MarginalValueCurve,
    cfg: &ChanceConfig,
    spec: &StorageSpec,
) -> Result<DispatchDecision> {
    let window = truncate_window(forecast_window, cfg.lookahead)?;
    let z = if cfg.gamma_threshold == 0.5 {
        0.0
    } else {
        normal_quantile(cfg.gamma_threshold)
    };
    penalized_lookahead(window, soc_prev, terminal, z * cfg.price_std, cfg.soc_grid, spec)
}

/// Rolling-horizon robust decision: worst case over future prices in the
/// ball of radius `Γ·scale` around the forecast.
pub fn robust_policy(
    forecast_window: &[f64],
    soc_prev: Soc,
    terminal: &MarginalValueCurve,
    cfg: &RobustConfig,
    spec: &StorageSpec,
) -> Result<DispatchDecision> {
    let window = truncate_window(forecast_window, cfg.lookahead)?;
    penalized_lookahead(
        window,
        soc_prev,
        terminal,
        cfg.gamma_threshold * cfg.ellipsoid_radius_scale,
        cfg.soc_grid,
        spec,
    )
}

/// Maximizes `λ(p − b) − Cp + Q̂(e') − ζ|e' − e|`: the threshold rule with
/// both thresholds moved out by ζ.
pub fn switching_cost_policy(
    price: f64,
    soc_prev: Soc,
    q_hat: &MarginalValueCurve,
    cfg: &SwitchingConfig,
    spec: &StorageSpec,
) -> DispatchDecision {
    threshold_dispatch(price, soc_prev, q_hat, cfg.zeta, cfg.zeta, spec)
}

/// Seeded noisy price forecast for the window `[t, t + h)`: the observed
/// price at `t` followed by true future prices plus Gaussian noise.
pub fn noisy_price_window(prices: &[f64], t: usize, h: usize, noise_std: f64, seed: u64) -> Vec<f64> {
    let end = (t + h).min(prices.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(t as u64));
    prices[t..end]
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if k == 0 || noise_std == 0.0 {
                p
            } else {
                let z: f64 = StandardNormal.sample(&mut rng);
                p + noise_std * z
            }
        })
        .collect()
}
