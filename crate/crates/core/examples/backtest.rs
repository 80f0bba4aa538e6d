//! Every strategy on one synthetic week with a poor value forecaster.
//!
//! ```bash
//! cargo run --release --example backtest
//! ```

use conformal_arbitrage::conformal::ControllerConfig;
use conformal_arbitrage::harness::{
    compute_regret, offline_oracle_prepared, prepare, run_prepared, ForecasterKind, RunConfig, Strategy,
};

fn main() -> conformal_arbitrage::Result<()> {
    let mut cfg = RunConfig {
        seed: 4,
        controller: ControllerConfig {
            epsilon: 0.03,
            rho: 0.003,
            sigma: 50.0,
            k: 0.18,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.forecaster.kind = ForecasterKind::Noisy;
    cfg.forecaster.target_r2 = Some(-0.4);
    cfg.forecaster.noise.seed = 1004;

    let prepared = prepare(&cfg)?;
    let oracle = offline_oracle_prepared(&prepared)?;
    println!(
        "{} steps, forecaster R2 {:+.3}, offline optimum ${:.2}\n",
        prepared.prices.len(),
        prepared.forecast_r2()?,
        oracle.profit
    );
    println!("{:<22} {:>10} {:>10} {:>8}", "strategy", "profit", "regret", "risk");
    for strategy in Strategy::ALL {
        cfg.strategy = strategy;
        let run = run_prepared(&cfg, &prepared)?;
        let risk = run.cumulative_risk().map_or("-".to_string(), |r| format!("{r:.3}"));
        println!(
            "{:<22} {:>10.2} {:>10.2} {:>8}",
            strategy.name(),
            run.profit(),
            compute_regret(&run, &oracle)?,
            risk
        );
    }
    Ok(())
}
