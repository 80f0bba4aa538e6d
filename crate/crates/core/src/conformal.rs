//! Online conformal controller for the dispatch control variable γ.
//!
//! The controller runs `γ ← γ + ρ·(ε − ℓ)` on clipped losses in `[0, 1]`.
//! Because γ itself is never clamped, the running mean of the losses obeys
//! `R̂_t = ε + (γ_1 − γ_{t+1}) / (ρ·t)` exactly; [`risk_identity`] reports
//! the floating-point residual of that identity.
//!
//! Two losses are provided. The prediction-error loss compares γ against a
//! reference level derived from the running absolute gap between the
//! executed forecast and its one-step correction. The value-error loss
//! compares the value (under the corrected curve) of the decision taken on
//! the corrected curve with the decision actually taken.

use serde::{Deserialize, Serialize};

use crate::dispatch::{conformal_policy, decision_value, PredictionSetParams};
use crate::domain::{Soc, StorageSpec};
use crate::error::{Error, Result};
use crate::valuefn::MarginalValueCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    PredictionError,
    ValueError,
}

/// Reference-γ mapping used by the prediction-error loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    /// `γ̂ = γ̄·exp(−k·Δq)`: large forecast gaps pull γ̂ toward 0.
    #[default]
    DecreasingExp,
    /// `γ̂ = γ̄·(1 − exp(−k·Δq))`.
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Risk tolerance ε in [0, 1].
    pub epsilon: f64,
    /// Step size ρ > 0.
    pub rho: f64,
    /// Prediction-set sensitivity σ ($/MWh).
    pub sigma: f64,
    /// Initial control value γ_1.
    pub gamma_init: f64,
    pub loss_kind: LossKind,
    /// Upper level γ̄ of the reference mapping; also the prediction-error loss normalizer.
    pub gamma_bar: f64,
    /// Mapping sensitivity k.
    pub k: f64,
    /// Normalizer for value-error losses ($). Unset means 1 here; the
    /// backtest fills it from the price data.
    pub value_loss_scale: Option<f64>,
    pub mapping_kind: MappingKind,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            rho: 0.001,
            sigma: 10.0,
            gamma_init: 1.0,
            loss_kind: LossKind::PredictionError,
            gamma_bar: 3.0,
            k: 0.1,
            value_loss_scale: None,
            mapping_kind: MappingKind::DecreasingExp,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid("epsilon", format!("must lie in [0, 1], got {}", self.epsilon)));
        }
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("rho", self.rho)?;
        positive("gamma_bar", self.gamma_bar)?;
        positive("k", self.k)?;
        if let Some(v) = self.value_loss_scale {
            positive("value_loss_scale", v)?;
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if !self.gamma_init.is_finite() {
            return Err(Error::invalid("gamma_init", "must be finite"));
        }
        Ok(())
    }

    /// Reference control value for a running forecast gap `delta_q`.
    pub fn reference_gamma(&self, delta_q: f64) -> f64 {
        match self.mapping_kind {
            MappingKind::DecreasingExp => self.gamma_bar * (-self.k * delta_q).exp(),
            MappingKind::Saturating => self.gamma_bar * (1.0 - (-self.k * delta_q).exp()),
        }
    }
}

/// Per-step record of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub loss_raw: f64,
    pub loss_clipped: f64,
    /// γ after applying this loss.
    pub gamma_after: f64,
    pub cumulative_risk: f64,
}

/// Loss history and γ trajectory of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskLedger {
    pub gamma_init: f64,
    pub entries: Vec<LedgerEntry>,
    loss_sum: f64,
}

impl RiskLedger {
    pub fn new(gamma_init: f64) -> Self {
        Self {
            gamma_init,
            entries: Vec::new(),
            loss_sum: 0.0,
        }
    }

    /// Number of losses recorded.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `R̂_t`, the mean clipped loss so far (0 before any loss).
    pub fn cumulative_risk(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.loss_sum / self.entries.len() as f64
        }
    }

    /// `γ_1, γ_2, …, γ_{t+1}`.
    pub fn gamma_trace(&self) -> Vec<f64> {
        std::iter::once(self.gamma_init)
            .chain(self.entries.iter().map(|e| e.gamma_after))
            .collect()
    }

    pub fn min_gamma(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.gamma_after)
            .fold(self.gamma_init, f64::min)
    }

    fn push(&mut self, loss_raw: f64, loss_clipped: f64, gamma_after: f64) {
        self.loss_sum += loss_clipped;
        let cumulative_risk = self.loss_sum / (self.entries.len() + 1) as f64;
        self.entries.push(LedgerEntry {
            loss_raw,
            loss_clipped,
            gamma_after,
            cumulative_risk,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Current γ_t.
    pub gamma: f64,
    /// Σ|q̂ − q̄| at executed SoCs, for the running forecast gap Δq.
    pub running_abs_q_error_sum: f64,
    pub q_error_count: usize,
    pub ledger: RiskLedger,
}

impl ControllerState {
    pub fn new(cfg: &ControllerConfig) -> Self {
        Self {
            gamma: cfg.gamma_init,
            running_abs_q_error_sum: 0.0,
            q_error_count: 0,
            ledger: RiskLedger::new(cfg.gamma_init),
        }
    }

    /// Number of γ updates applied.
    pub fn step_count(&self) -> usize {
        self.ledger.len()
    }

    /// Running mean Δq of the absolute forecast gap (0 before any observation).
    pub fn delta_q(&self) -> f64 {
        if self.q_error_count == 0 {
            0.0
        } else {
            self.running_abs_q_error_sum / self.q_error_count as f64
        }
    }

    pub fn prediction_set(&self, cfg: &ControllerConfig) -> PredictionSetParams {
        PredictionSetParams {
            gamma: self.gamma,
            sigma: cfg.sigma,
        }
    }
}

/// Normalizes a raw loss into `[0, 1]`: value-error losses by the value
/// scale, prediction-error losses by γ̄.
pub fn clip_loss(raw: f64, cfg: &ControllerConfig) -> f64 {
    let scale = match cfg.loss_kind {
        LossKind::ValueError => cfg.value_loss_scale.unwrap_or(1.0),
        LossKind::PredictionError => cfg.gamma_bar,
    };
    let v = raw / scale;
    if v.is_nan() {
        return 1.0;
    }
    v.clamp(0.0, 1.0)
}

/// Applies `γ ← γ + ρ(ε − ℓ)` for a clipped loss; `raw` is kept for the ledger.
pub fn update_gamma_with_raw(
    state: &mut ControllerState,
    raw: f64,
    loss: f64,
    cfg: &ControllerConfig,
) -> Result<()> {
    if !(0.0..=1.0).contains(&loss) {
        return Err(Error::invalid(
            "loss",
            format!("clipped loss must lie in [0, 1], got {loss}"),
        ));
    }
    state.gamma += cfg.rho * (cfg.epsilon - loss);
    state.ledger.push(raw, loss, state.gamma);
    Ok(())
}

/// Applies `γ ← γ + ρ(ε − ℓ)`; `loss` must already be clipped to `[0, 1]`.
pub fn update_gamma(state: &mut ControllerState, loss: f64, cfg: &ControllerConfig) -> Result<()> {
    update_gamma_with_raw(state, loss, loss, cfg)
}

/// Records `|q̂ − q̄|` at the executed SoC and returns the raw loss `γ_t − γ̂_t`.
pub fn loss_prediction_error(
    state: &mut ControllerState,
    q_hat_at_exec: f64,
    q_bar_at_exec: f64,
    cfg: &ControllerConfig,
) -> f64 {
    state.running_abs_q_error_sum += (q_hat_at_exec - q_bar_at_exec).abs();
    state.q_error_count += 1;
    let reference = cfg.reference_gamma(state.delta_q());
    state.gamma - reference
}

/// Raw value-error loss `|V̄ − V̂|`.
///
/// Both decisions come from the conformal policy with the same prediction
/// set, one on the corrected curve `q̄_t` and one on the executed forecast
/// `q̂_t`, and both are valued under `Q̄_t`.
pub fn loss_value_error(
    soc_prev: Soc,
    price: f64,
    q_hat: &MarginalValueCurve,
    q_bar: &MarginalValueCurve,
    params: &PredictionSetParams,
    spec: &StorageSpec,
) -> f64 {
    let corrected = conformal_policy(price, soc_prev, q_bar, params, spec);
    let executed = conformal_policy(price, soc_prev, q_hat, params, spec);
    let value = q_bar.integrate();
    let v_bar = decision_value(price, soc_prev, &corrected, &value, spec);
    let v_hat = decision_value(price, soc_prev, &executed, &value, spec);
    (v_bar - v_hat).abs()
}

/// `R̂_t − ε − (γ_1 − γ_{t+1})/(ρ·t)` at the ledger's current length.
pub fn risk_identity(ledger: &RiskLedger, cfg: &ControllerConfig) -> Result<f64> {
    let t = ledger.len();
    if t == 0 {
        return Err(Error::EmptyInput("risk ledger"));
    }
    Ok(identity_residual_at(ledger, cfg, t))
}

/// Residuals of the risk identity after every recorded loss.
pub fn risk_identity_trace(ledger: &RiskLedger, cfg: &ControllerConfig) -> Vec<f64> {
    (1..=ledger.len())
        .map(|t| identity_residual_at(ledger, cfg, t))
        .collect()
}

fn identity_residual_at(ledger: &RiskLedger, cfg: &ControllerConfig, t: usize) -> f64 {
    let entry = &ledger.entries[t - 1];
    entry.cumulative_risk
        - cfg.epsilon
        - (ledger.gamma_init - entry.gamma_after) / (cfg.rho * t as f64)
}
