//! Calibrating the noisy value forecaster to a target accuracy.
//!
//! ```bash
//! cargo run --example noisy_forecaster
//! ```

use conformal_arbitrage::domain::StorageSpec;
use conformal_arbitrage::forecaster::{
    calibrate_noise, measure_r2, uniform_midpoints, NoisyOracle, NoisyOracleConfig,
};
use conformal_arbitrage::harness::{synthesize_prices, SyntheticPriceSpec};
use conformal_arbitrage::valuefn::{backward_induct, MarginalValueCurve};

fn main() -> conformal_arbitrage::Result<()> {
    let spec = StorageSpec::from_power_rating(0.5, 1.0, 0.9, 10.0, 5.0 / 60.0)?;
    let prices = synthesize_prices(&SyntheticPriceSpec::default(), 1)?;
    let terminal = MarginalValueCurve::target_soc(1.0, 0.5, prices.mean())?;
    let truth = backward_induct(prices.prices(), &spec, &terminal, None)?[1..].to_vec();
    let grid = uniform_midpoints(1.0, 50);

    for target in [0.8, 0.4, 0.0, -0.4] {
        let cfg = calibrate_noise(target, &truth, &NoisyOracleConfig::default(), 0.01)?;
        let oracle = NoisyOracle::for_truth(cfg, &truth)?;
        let predicted = truth
            .iter()
            .enumerate()
            .map(|(t, c)| oracle.perturb(t, c))
            .collect::<conformal_arbitrage::Result<Vec<_>>>()?;
        let report = measure_r2(&predicted, &truth, &grid)?;
        println!(
            "target R2 {target:+.1}: noise scale {:6.2} $/MWh, measured R2 {:+.3}, mean abs error {:5.2}",
            cfg.noise_scale, report.r_squared, report.mean_abs_error
        );
    }
    Ok(())
}
