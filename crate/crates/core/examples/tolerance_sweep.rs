//! Cumulative risk against the tolerance for both conformal strategies.
//!
//! ```bash
//! cargo run --release --example tolerance_sweep
//! ```

use conformal_arbitrage::conformal::ControllerConfig;
use conformal_arbitrage::harness::{run_sweep, write_sweep, ForecasterKind, RunConfig, Strategy};

fn main() -> conformal_arbitrage::Result<()> {
    let eps = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
    for strategy in [Strategy::ConformalPrediction, Strategy::ConformalValue] {
        let mut cfg = RunConfig {
            strategy,
            controller: ControllerConfig {
                rho: 0.003,
                sigma: 50.0,
                k: 0.18,
                value_loss_scale: Some(0.1),
                ..Default::default()
            },
            ..Default::default()
        };
        cfg.prices.synthetic.steps = 10_000;
        cfg.forecaster.kind = ForecasterKind::Noisy;
        cfg.forecaster.target_r2 = Some(-0.4);
        let rows = run_sweep(&cfg, "controller.epsilon", &eps)?;
        println!("{strategy}:");
        for r in rows.iter().filter(|r| r.metric == "cumulative_risk") {
            println!("  epsilon {:.2} -> cumulative risk {:.4}", r.value, r.metric_value);
        }
        if strategy == Strategy::ConformalValue {
            println!("\nfull sweep table:");
            write_sweep(std::io::stdout().lock(), &rows)?;
        }
    }
    Ok(())
}
