//! The online dispatch loop, the offline optimum and regret.

use serde::{Deserialize, Serialize};

use super::config::{ForecasterKind, RunConfig, Strategy, TerminalKind};
use super::prices::{format_timestamp, load_prices, synthesize_prices};
use crate::baselines::{
    chance_constrained_policy, cvar_policy, cvar_scenarios, noisy_price_window, robust_policy,
    switching_cost_policy,
};
use crate::conformal::{
    clip_loss, loss_prediction_error, loss_value_error, update_gamma_with_raw, ControllerConfig,
    ControllerState, LossKind, RiskLedger,
};
use crate::dispatch::{conformal_policy, risk_neutral_policy};
use crate::domain::{apply_decision_at_price, step_profit, DispatchDecision, PriceSeries, Soc, StorageSpec};
use crate::error::{Error, Result};
use crate::forecaster::{
    calibrate_noise, measure_r2, uniform_midpoints, ForecastSource, NoisyOracle, NoisyOracleConfig,
    OracleForecaster,
};
use crate::valuefn::{backward_induct, bellman_backup, MarginalValueCurve};

/// Largest tolerated residual of the cumulative-risk identity.
pub const IDENTITY_TOL: f64 = 1e-9;

/// One row of the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub timestamp: String,
    pub price: f64,
    /// Control value used for this step's decision (conformal strategies).
    pub gamma: Option<f64>,
    pub p: f64,
    pub b: f64,
    /// SoC after this step.
    pub soc: f64,
    pub step_profit: f64,
    pub cumulative_profit: f64,
    /// Loss applied at this step (it scores the previous step's decision).
    pub loss_clipped: Option<f64>,
    pub cumulative_risk: Option<f64>,
}

/// Everything derived from the config before the loop runs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: StorageSpec,
    pub prices: PriceSeries,
    pub initial_soc: Soc,
    pub terminal: MarginalValueCurve,
    /// `truth[i]` is the exact curve for the decision at step `i`.
    pub truth: Vec<MarginalValueCurve>,
    /// Noise settings after any R² calibration; `None` for the oracle forecaster.
    pub noise: Option<NoisyOracleConfig>,
    /// Value-error normalizer `P × 99th percentile of |price|`.
    pub default_value_loss_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub strategy: Strategy,
    pub records: Vec<TrajectoryRecord>,
    /// Present for conformal strategies.
    pub ledger: Option<RiskLedger>,
    pub controller: Option<ControllerConfig>,
    /// `|q̂_t − q̄_t|` at the executed SoC, one per scored step.
    pub td_errors: Vec<f64>,
    pub max_identity_residual: Option<f64>,
}

impl BacktestResult {
    pub fn profit(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_profit)
    }

    pub fn terminal_soc(&self) -> Option<f64> {
        self.records.last().map(|r| r.soc)
    }

    pub fn cumulative_risk(&self) -> Option<f64> {
        self.ledger.as_ref().map(RiskLedger::cumulative_risk)
    }

    pub fn final_gamma(&self) -> Option<f64> {
        self.ledger
            .as_ref()
            .map(|l| l.gamma_trace().last().copied().unwrap_or(l.gamma_init))
    }

    pub fn decisions(&self) -> Vec<DispatchDecision> {
        self.records
            .iter()
            .map(|r| DispatchDecision { discharge: r.p, charge: r.b })
            .collect()
    }
}

/// Loads or synthesizes prices according to the config.
pub fn price_series(cfg: &RunConfig) -> Result<PriceSeries> {
    match &cfg.prices.path {
        Some(path) => load_prices(path, cfg.prices.allow_gaps),
        None => synthesize_prices(&cfg.prices.synthetic, cfg.seed),
    }
}

/// Terminal curve for a price series.
pub fn terminal_curve(cfg: &RunConfig, spec: &StorageSpec, prices: &PriceSeries) -> Result<MarginalValueCurve> {
    match cfg.terminal.kind {
        TerminalKind::Zero => Ok(MarginalValueCurve::zero(spec.capacity)),
        TerminalKind::TargetSoc => {
            let salvage = cfg.terminal.salvage.unwrap_or_else(|| prices.mean().max(0.0));
            MarginalValueCurve::target_soc(
                spec.capacity,
                cfg.terminal.target_fraction * spec.capacity,
                salvage,
            )
        }
    }
}

fn percentile_abs(values: &[f64], q: f64) -> f64 {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let idx = ((abs.len() - 1) as f64 * q).round() as usize;
    abs[idx]
}

/// Builds prices, truth curves and the forecaster noise for a config.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let prices = price_series(cfg)?;
    prepare_with_prices(cfg, prices)
}

/// [`prepare`] with a given price series.
pub fn prepare_with_prices(cfg: &RunConfig, prices: PriceSeries) -> Result<Prepared> {
    let spec = cfg.storage.spec()?;
    if prices.is_empty() {
        return Err(Error::EmptyInput("prices"));
    }
    let terminal = terminal_curve(cfg, &spec, &prices)?;
    let curves = backward_induct(prices.prices(), &spec, &terminal, None)?;
    let truth = curves[1..].to_vec();
    let noise = match cfg.forecaster.kind {
        ForecasterKind::Oracle => None,
        ForecasterKind::Noisy => Some(match cfg.forecaster.target_r2 {
            Some(target) => calibrate_noise(target, &truth, &cfg.forecaster.noise, cfg.forecaster.r2_tolerance)?,
            None => cfg.forecaster.noise,
        }),
    };
    let default_value_loss_scale =
        (spec.power_limit_per_step * percentile_abs(prices.prices(), 0.99)).max(f64::MIN_POSITIVE);
    Ok(Prepared {
        initial_soc: Soc::from_fraction(cfg.initial_soc, &spec)?,
        spec,
        prices,
        terminal,
        truth,
        noise,
        default_value_loss_scale,
    })
}

impl Prepared {
    /// The forecaster described by the prepared noise settings.
    pub fn forecaster(&self) -> Result<Box<dyn ForecastSource + Send>> {
        Ok(match self.noise {
            None => Box::new(OracleForecaster),
            Some(cfg) => Box::new(NoisyOracle::for_truth(cfg, &self.truth)?),
        })
    }

    /// Pooled R² of the prepared forecaster against the truth curves.
    pub fn forecast_r2(&self) -> Result<f64> {
        let mut f = self.forecaster()?;
        let predicted = (0..self.truth.len())
            .map(|t| f.forecast(t, &self.prices.prices()[..=t], &self.truth))
            .collect::<Result<Vec<_>>>()?;
        let grid = uniform_midpoints(self.spec.capacity, crate::valuefn::DEFAULT_SEGMENTS);
        Ok(measure_r2(&predicted, &self.truth, &grid)?.r_squared)
    }
}

/// Runs the config end to end.
pub fn run_backtest(cfg: &RunConfig) -> Result<BacktestResult> {
    let prepared = prepare(cfg)?;
    run_prepared(cfg, &prepared)
}

/// Runs `cfg.strategy` on prepared data with the prepared forecaster.
pub fn run_prepared(cfg: &RunConfig, prepared: &Prepared) -> Result<BacktestResult> {
    let mut forecaster = prepared.forecaster()?;
    run_with_forecaster(cfg, prepared, forecaster.as_mut())
}

/// The online loop with an explicit forecaster.
///
/// At each step the price is observed, the forecast for this step is drawn,
/// the previous step's decision is scored against the corrected curve
/// `q̄ = backup(q̂_now, λ_now)`, γ is updated, and the new decision is made.
pub fn run_with_forecaster(
    cfg: &RunConfig,
    prepared: &Prepared,
    forecaster: &mut dyn ForecastSource,
) -> Result<BacktestResult> {
    let spec = &prepared.spec;
    let prices = prepared.prices.prices();
    let timestamps = prepared.prices.timestamps();
    let truth = &prepared.truth;
    let strategy = cfg.strategy;
    let mut ccfg = cfg.controller_for_strategy();
    if ccfg.value_loss_scale.is_none() {
        ccfg.value_loss_scale = Some(prepared.default_value_loss_scale);
    }
    let loss_kind = strategy.loss_kind();
    let mut state = ControllerState::new(&ccfg);
    let mut soc = prepared.initial_soc;
    let mut cumulative = 0.0;
    let mut records = Vec::with_capacity(prices.len());
    let mut td_errors = Vec::with_capacity(prices.len());
    let mut max_residual: f64 = 0.0;
    // (SoC before, price, forecast, prediction set) of the previous step
    let mut prev: Option<(Soc, f64, MarginalValueCurve, crate::dispatch::PredictionSetParams)> = None;

    for (i, &price) in prices.iter().enumerate() {
        let step = |e: Error| e.at_step(i);
        let q_hat = forecaster.forecast(i, &prices[..=i], truth).map_err(step)?;
        let mut loss_clipped = None;
        if let Some((soc_before, price_prev, q_prev, params_prev)) = prev.take() {
            let q_bar = bellman_backup(&q_hat, price, spec);
            let e_exec = soc.value();
            let (qh, qb) = (q_prev.value_at(e_exec), q_bar.value_at(e_exec));
            td_errors.push((qh - qb).abs());
            if let Some(kind) = loss_kind {
                let raw = match kind {
                    LossKind::PredictionError => loss_prediction_error(&mut state, qh, qb, &ccfg),
                    LossKind::ValueError => {
                        loss_value_error(soc_before, price_prev, &q_prev, &q_bar, &params_prev, spec)
                    }
                };
                let clipped = clip_loss(raw, &ccfg);
                update_gamma_with_raw(&mut state, raw, clipped, &ccfg).map_err(step)?;
                let t = state.ledger.len() as f64;
                let residual = (state.ledger.cumulative_risk()
                    - ccfg.epsilon
                    - (ccfg.gamma_init - state.gamma) / (ccfg.rho * t))
                    .abs();
                if residual > IDENTITY_TOL {
                    return Err(Error::Numerical(format!(
                        "cumulative risk identity residual {residual:e} exceeds {IDENTITY_TOL:e}"
                    ))
                    .at_step(i));
                }
                max_residual = max_residual.max(residual);
                loss_clipped = Some(clipped);
            }
        }

        let params = state.prediction_set(&ccfg);
        let decision = match strategy {
            Strategy::RiskNeutral => risk_neutral_policy(price, soc, &q_hat, spec),
            Strategy::ConformalPrediction | Strategy::ConformalValue => {
                conformal_policy(price, soc, &q_hat, &params, spec)
            }
            Strategy::SwitchingCost => {
                switching_cost_policy(price, soc, &q_hat, &cfg.baselines.switching, spec)
            }
            Strategy::Cvar => {
                let scen = cvar_scenarios(&q_hat, i, &cfg.baselines.cvar).map_err(step)?;
                cvar_policy(price, soc, &scen, &cfg.baselines.cvar, spec).map_err(step)?
            }
            Strategy::ChanceConstrained | Strategy::Robust => {
                let h = match strategy {
                    Strategy::Robust => cfg.baselines.robust.lookahead,
                    _ => cfg.baselines.chance.lookahead,
                };
                let window = noisy_price_window(prices, i, h, cfg.lookahead.price_noise_std, cfg.seed);
                let end = i + window.len() - 1;
                let terminal = forecaster.forecast(end, &prices[..=i], truth).map_err(step)?;
                if strategy == Strategy::Robust {
                    robust_policy(&window, soc, &terminal, &cfg.baselines.robust, spec).map_err(step)?
                } else {
                    chance_constrained_policy(&window, soc, &terminal, &cfg.baselines.chance, spec)
                        .map_err(step)?
                }
            }
        };
        let soc_before = soc;
        soc = apply_decision_at_price(soc, &decision, price, spec).map_err(step)?;
        let profit = step_profit(price, &decision, spec);
        cumulative += profit;
        let conformal = loss_kind.is_some();
        records.push(TrajectoryRecord {
            t: i,
            timestamp: format_timestamp(&timestamps[i]),
            price,
            gamma: conformal.then_some(params.gamma),
            p: decision.discharge,
            b: decision.charge,
            soc: soc.value(),
            step_profit: profit,
            cumulative_profit: cumulative,
            loss_clipped,
            cumulative_risk: conformal.then(|| state.ledger.cumulative_risk()),
        });
        prev = Some((soc_before, price, q_hat, params));
    }

    let conformal = loss_kind.is_some();
    Ok(BacktestResult {
        strategy,
        records,
        ledger: conformal.then_some(state.ledger),
        controller: conformal.then_some(ccfg),
        td_errors,
        max_identity_residual: conformal.then_some(max_residual),
    })
}

/// Result of the perfect-information benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub profit: f64,
    pub decisions: Vec<DispatchDecision>,
    pub socs: Vec<f64>,
}

/// Perfect-foresight optimum: backward induction on the realized prices,
/// then forward dispatch with the threshold rule on the exact curves.
pub fn offline_oracle(
    prices: &[f64],
    spec: &StorageSpec,
    initial_soc: Soc,
    terminal: &MarginalValueCurve,
) -> Result<OracleResult> {
    let curves = backward_induct(prices, spec, terminal, None)?;
    let mut soc = initial_soc;
    let mut profit = 0.0;
    let mut decisions = Vec::with_capacity(prices.len());
    let mut socs = Vec::with_capacity(prices.len());
    for (i, &price) in prices.iter().enumerate() {
        let d = risk_neutral_policy(price, soc, &curves[i + 1], spec);
        soc = apply_decision_at_price(soc, &d, price, spec).map_err(|e| e.at_step(i))?;
        profit += step_profit(price, &d, spec);
        decisions.push(d);
        socs.push(soc.value());
    }
    Ok(OracleResult { profit, decisions, socs })
}

/// Offline optimum for a prepared run.
pub fn offline_oracle_prepared(prepared: &Prepared) -> Result<OracleResult> {
    offline_oracle(
        prepared.prices.prices(),
        &prepared.spec,
        prepared.initial_soc,
        &prepared.terminal,
    )
}

/// `oracle_profit − run_profit`. Fails if the two cover different horizons.
pub fn compute_regret(run: &BacktestResult, oracle: &OracleResult) -> Result<f64> {
    if run.records.len() != oracle.decisions.len() {
        return Err(Error::Mismatch(format!(
            "run covers {} steps but the oracle covers {}",
            run.records.len(),
            oracle.decisions.len()
        )));
    }
    Ok(oracle.profit - run.profit())
}
