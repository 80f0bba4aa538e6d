//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prices::SyntheticPriceSpec;
use crate::baselines::BaselineConfig;
use crate::conformal::{ControllerConfig, LossKind};
use crate::domain::StorageSpec;
use crate::error::{Error, Result};
use crate::forecaster::NoisyOracleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    RiskNeutral,
    /// Conformal dispatch with the prediction-error loss.
    ConformalPrediction,
    /// Conformal dispatch with the value-error loss.
    ConformalValue,
    Cvar,
    ChanceConstrained,
    Robust,
    SwitchingCost,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::RiskNeutral,
        Strategy::ConformalPrediction,
        Strategy::ConformalValue,
        Strategy::Cvar,
        Strategy::ChanceConstrained,
        Strategy::Robust,
        Strategy::SwitchingCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RiskNeutral => "risk_neutral",
            Strategy::ConformalPrediction => "conformal_prediction",
            Strategy::ConformalValue => "conformal_value",
            Strategy::Cvar => "cvar",
            Strategy::ChanceConstrained => "chance_constrained",
            Strategy::Robust => "robust",
            Strategy::SwitchingCost => "switching_cost",
        }
    }

    /// Loss kind driving the controller, for the conformal strategies.
    pub fn loss_kind(self) -> Option<LossKind> {
        match self {
            Strategy::ConformalPrediction => Some(LossKind::PredictionError),
            Strategy::ConformalValue => Some(LossKind::ValueError),
            _ => None,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown strategy `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StorageBlock {
    pub power_mw: f64,
    pub capacity_mwh: f64,
    pub efficiency: f64,
    pub marginal_cost: f64,
    pub interval_minutes: f64,
}

impl Default for StorageBlock {
    fn default() -> Self {
        Self {
            power_mw: 0.5,
            capacity_mwh: 1.0,
            efficiency: 0.9,
            marginal_cost: 10.0,
            interval_minutes: 5.0,
        }
    }
}

impl StorageBlock {
    pub fn spec(&self) -> Result<StorageSpec> {
        StorageSpec::from_power_rating(
            self.power_mw,
            self.capacity_mwh,
            self.efficiency,
            self.marginal_cost,
            self.interval_minutes / 60.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceBlock {
    /// CSV file; the synthetic generator is used when absent.
    pub path: Option<PathBuf>,
    pub allow_gaps: bool,
    pub synthetic: SyntheticPriceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Zero,
    #[default]
    TargetSoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerminalBlock {
    pub kind: TerminalKind,
    /// Target as a fraction of capacity.
    pub target_fraction: f64,
    /// Value per MWh short of the target; defaults to the mean price.
    pub salvage: Option<f64>,
}

impl Default for TerminalBlock {
    fn default() -> Self {
        Self {
            kind: TerminalKind::TargetSoc,
            target_fraction: 0.5,
            salvage: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    #[default]
    Oracle,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecasterBlock {
    pub kind: ForecasterKind,
    /// When set, `noise.noise_scale` is recalibrated to hit this pooled R².
    pub target_r2: Option<f64>,
    pub r2_tolerance: f64,
    pub noise: NoisyOracleConfig,
}

impl Default for ForecasterBlock {
    fn default() -> Self {
        Self {
            kind: ForecasterKind::Oracle,
            target_r2: None,
            r2_tolerance: 0.01,
            noise: NoisyOracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookaheadBlock {
    /// Noise on future prices in the rolling-horizon forecast window.
    pub price_noise_std: f64,
}

impl Default for LookaheadBlock {
    fn default() -> Self {
        Self { price_noise_std: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub write_curves: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            write_curves: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub strategy: Strategy,
    /// Initial SoC as a fraction of capacity.
    pub initial_soc: f64,
    pub storage: StorageBlock,
    pub prices: PriceBlock,
    pub terminal: TerminalBlock,
    pub forecaster: ForecasterBlock,
    pub controller: ControllerConfig,
    pub baselines: BaselineConfig,
    pub lookahead: LookaheadBlock,
    pub output: OutputBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strategy: Strategy::RiskNeutral,
            initial_soc: 0.5,
            storage: StorageBlock::default(),
            prices: PriceBlock::default(),
            terminal: TerminalBlock::default(),
            forecaster: ForecasterBlock::default(),
            controller: ControllerConfig::default(),
            baselines: BaselineConfig::default(),
            lookahead: LookaheadBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config file; relative price paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.prices.path, path.parent()) {
            if p.is_relative() {
                cfg.prices.path = Some(dir.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.storage.spec()?;
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::invalid("initial_soc", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.terminal.target_fraction) {
            return Err(Error::invalid("terminal.target_fraction", "must lie in [0, 1]"));
        }
        if let Some(s) = self.terminal.salvage {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid("terminal.salvage", "must be finite and >= 0"));
            }
        }
        if let Some(p) = &self.prices.path {
            if !p.exists() {
                return Err(Error::Config(format!("price file {} does not exist", p.display())));
            }
        } else {
            self.prices.synthetic.validate()?;
        }
        self.forecaster.noise.validate()?;
        if let Some(r2) = self.forecaster.target_r2 {
            if !(r2.is_finite() && r2 <= 1.0) {
                return Err(Error::invalid("forecaster.target_r2", "must be finite and <= 1"));
            }
        }
        self.controller.validate()?;
        self.baselines.validate()?;
        if !(self.lookahead.price_noise_std.is_finite() && self.lookahead.price_noise_std >= 0.0) {
            return Err(Error::invalid("lookahead.price_noise_std", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Controller settings with the loss kind implied by the strategy.
    pub fn controller_for_strategy(&self) -> ControllerConfig {
        let mut c = self.controller;
        if let Some(kind) = self.strategy.loss_kind() {
            c.loss_kind = kind;
        }
        c
    }

    /// Copy with the scalar at a dotted `path` (e.g. `controller.epsilon`) replaced.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        let mut tree = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut tree;
        let parts: Vec<&str> = path.split('.').collect();
        for part in &parts {
            node = node
                .get_mut(*part)
                .ok_or_else(|| Error::Config(format!("unknown config path `{path}`")))?;
        }
        *node = match node {
            toml::Value::Float(_) => toml::Value::Float(value),
            toml::Value::Integer(_) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
            _ => {
                return Err(Error::Config(format!(
                    "config path `{path}` does not address a numeric scalar"
                )))
            }
        };
        let cfg: RunConfig = tree.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}
