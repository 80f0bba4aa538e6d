//! Risk-neutral and conformal dispatch against one marginal value curve.
//!
//! Prices inside the idle band leave the battery untouched; a smaller
//! control value widens the band.
//!
//! ```bash
//! cargo run --example threshold_policy
//! ```

use conformal_arbitrage::dispatch::{
    conformal_policy, halfwidth, idle_band, risk_neutral_policy, PredictionSetParams,
};
use conformal_arbitrage::domain::{Soc, StorageSpec};
use conformal_arbitrage::valuefn::MarginalValueCurve;

fn main() -> conformal_arbitrage::Result<()> {
    let spec = StorageSpec::new(0.5, 1.0, 0.9, 10.0, 1.0)?;
    let curve = MarginalValueCurve::from_steps(&[(0.5, 48.0), (1.0, 36.0)])?;
    let soc = Soc::new(0.5, &spec)?;

    for gamma in [1.0, 0.5, 0.2, 0.05] {
        let params = PredictionSetParams { gamma, sigma: 10.0 };
        let (low, high) = idle_band(soc, &curve, &params, &spec);
        println!(
            "gamma {gamma:4.2}: half-width {:5.2}, idle for prices in ({low:6.2}, {high:6.2}]",
            halfwidth(&params)
        );
    }

    println!("\nprice  risk-neutral (p, b)   conformal gamma=0.2 (p, b)");
    let params = PredictionSetParams { gamma: 0.2, sigma: 10.0 };
    for price in [-5.0, 20.0, 30.0, 45.0, 60.0, 80.0] {
        let rn = risk_neutral_policy(price, soc, &curve, &spec);
        let cf = conformal_policy(price, soc, &curve, &params, &spec);
        println!(
            "{price:5.1}  ({:.3}, {:.3})          ({:.3}, {:.3})",
            rn.discharge, rn.charge, cf.discharge, cf.charge
        );
    }
    Ok(())
}
