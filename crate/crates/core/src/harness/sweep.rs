//! Parameter sweeps over one scalar config field.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backtest::{offline_oracle_prepared, prepare, run_prepared};
use super::config::RunConfig;
use crate::error::{Error, Result};

/// One long-format row: a metric value for one swept parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub metric: String,
    pub metric_value: f64,
}

/// Runs one backtest per value, in parallel, with every run sharing the base
/// seed so prices and forecast noise are identical across values.
pub fn run_sweep(base: &RunConfig, param_path: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("sweep values"));
    }
    let configs = values
        .iter()
        .map(|&v| base.with_value(param_path, v))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<SweepRow>> = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, &value)| {
            cfg.validate()?;
            let prepared = prepare(cfg)?;
            let run = run_prepared(cfg, &prepared)?;
            let oracle = offline_oracle_prepared(&prepared)?;
            let mut metrics = vec![
                ("profit", run.profit()),
                ("oracle_profit", oracle.profit),
                ("regret", oracle.profit - run.profit()),
            ];
            if let (Some(r), Some(g)) = (run.cumulative_risk(), run.final_gamma()) {
                metrics.push(("cumulative_risk", r));
                metrics.push(("final_gamma", g));
            }
            Ok(metrics
                .into_iter()
                .map(|(m, v)| SweepRow {
                    param: param_path.to_string(),
                    value,
                    metric: m.to_string(),
                    metric_value: v,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
