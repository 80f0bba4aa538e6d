//! CSV and JSON outputs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::backtest::{BacktestResult, OracleResult, TrajectoryRecord};
use crate::conformal::RiskLedger;
use crate::error::Result;

/// Writes the trajectory with a fixed header; optional fields are left empty.
pub fn write_trajectory<W: Write>(out: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record([
            "t",
            "timestamp",
            "price",
            "gamma",
            "p",
            "b",
            "soc",
            "step_profit",
            "cumulative_profit",
            "loss_clipped",
            "cumulative_risk",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: std::io::Read>(input: R) -> Result<Vec<TrajectoryRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// One row per loss; `gamma` is the value after that loss was applied.
pub fn write_ledger<W: Write>(out: W, ledger: &RiskLedger) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "gamma", "loss_raw", "loss_clipped", "cumulative_risk"])?;
    for (i, e) in ledger.entries.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.gamma_after.to_string(),
            e.loss_raw.to_string(),
            e.loss_clipped.to_string(),
            e.cumulative_risk.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub steps: usize,
    pub profit: f64,
    pub oracle_profit: Option<f64>,
    pub regret: Option<f64>,
    pub cumulative_risk: Option<f64>,
    pub final_gamma: Option<f64>,
    pub terminal_soc: Option<f64>,
    pub forecast_r2: Option<f64>,
}

impl RunSummary {
    pub fn new(run: &BacktestResult, oracle: Option<&OracleResult>, forecast_r2: Option<f64>) -> Self {
        Self {
            strategy: run.strategy.name().to_string(),
            steps: run.records.len(),
            profit: run.profit(),
            oracle_profit: oracle.map(|o| o.profit),
            regret: oracle.map(|o| o.profit - run.profit()),
            cumulative_risk: run.cumulative_risk(),
            final_gamma: run.final_gamma(),
            terminal_soc: run.terminal_soc(),
            forecast_r2,
        }
    }
}

pub fn write_summary<W: Write>(mut out: W, summary: &RunSummary) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out)?;
    Ok(())
}

/// Oracle decisions in the trajectory layout (no controller columns).
pub fn oracle_records(
    oracle: &OracleResult,
    prices: &crate::domain::PriceSeries,
    spec: &crate::domain::StorageSpec,
) -> Vec<TrajectoryRecord> {
    let mut cumulative = 0.0;
    oracle
        .decisions
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let price = prices.prices()[i];
            let profit = crate::domain::step_profit(price, d, spec);
            cumulative += profit;
            TrajectoryRecord {
                t: i,
                timestamp: super::prices::format_timestamp(&prices.timestamps()[i]),
                price,
                gamma: None,
                p: d.discharge,
                b: d.charge,
                soc: oracle.socs[i],
                step_profit: profit,
                cumulative_profit: cumulative,
                loss_clipped: None,
                cumulative_risk: None,
            }
        })
        .collect()
}
