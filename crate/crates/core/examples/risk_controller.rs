//! The conformal controller on a synthetic loss stream.
//!
//! Losses are drawn at a rate that depends on the control value, so the
//! controller settles where the long-run loss rate equals the tolerance.
//!
//! ```bash
//! cargo run --example risk_controller
//! ```

use conformal_arbitrage::conformal::{risk_identity, update_gamma, ControllerConfig, ControllerState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> conformal_arbitrage::Result<()> {
    let cfg = ControllerConfig {
        epsilon: 0.1,
        rho: 0.05,
        gamma_init: 1.0,
        ..Default::default()
    };
    cfg.validate()?;
    let mut state = ControllerState::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    for t in 1..=5000 {
        // a larger gamma trades more aggressively and fails more often
        let p_loss = (0.3 * state.gamma).clamp(0.0, 1.0);
        let loss = if rng.random_bool(p_loss) { 1.0 } else { 0.0 };
        update_gamma(&mut state, loss, &cfg)?;
        if t % 1000 == 0 {
            println!(
                "t={t:5}  gamma={:.4}  cumulative risk={:.4}  identity residual={:+.1e}",
                state.gamma,
                state.ledger.cumulative_risk(),
                risk_identity(&state.ledger, &cfg)?
            );
        }
    }
    Ok(())
}
