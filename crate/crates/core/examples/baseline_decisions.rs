//! One decision from each baseline strategy in the same state.
//!
//! ```bash
//! cargo run --example baseline_decisions
//! ```

use conformal_arbitrage::baselines::{
    chance_constrained_policy, cvar_policy, cvar_scenarios, deterministic_lookahead, robust_policy,
    switching_cost_policy, ChanceConfig, CvarConfig, RobustConfig, SwitchingConfig,
};
use conformal_arbitrage::dispatch::risk_neutral_policy;
use conformal_arbitrage::domain::{DispatchDecision, Soc, StorageSpec};
use conformal_arbitrage::valuefn::MarginalValueCurve;

fn show(name: &str, d: DispatchDecision) {
    println!("{name:<22} discharge {:.3}  charge {:.3}", d.discharge, d.charge);
}

fn main() -> conformal_arbitrage::Result<()> {
    let spec = StorageSpec::new(0.3, 1.0, 0.9, 5.0, 1.0)?;
    let soc = Soc::new(0.5, &spec)?;
    let q_hat = MarginalValueCurve::from_steps(&[(0.3, 55.0), (0.7, 42.0), (1.0, 30.0)])?;
    let window = [31.0, 28.0, 45.0, 70.0, 52.0, 35.0];
    let price = window[0];

    show("risk neutral", risk_neutral_policy(price, soc, &q_hat, &spec));
    show("deterministic lookahead", deterministic_lookahead(&window, soc, &q_hat, &spec)?);

    let cvar_cfg = CvarConfig::default();
    let scenarios = cvar_scenarios(&q_hat, 0, &cvar_cfg)?;
    show("cvar", cvar_policy(price, soc, &scenarios, &cvar_cfg, &spec)?);

    let chance = ChanceConfig { lookahead: window.len(), ..Default::default() };
    show("chance constrained", chance_constrained_policy(&window, soc, &q_hat, &chance, &spec)?);

    let robust = RobustConfig { lookahead: window.len(), ..Default::default() };
    show("robust", robust_policy(&window, soc, &q_hat, &robust, &spec)?);

    show(
        "switching cost",
        switching_cost_policy(price, soc, &q_hat, &SwitchingConfig { zeta: 5.0 }, &spec),
    );
    Ok(())
}
