mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conformal_arbitrage::dispatch::{
    conformal_policy, decision_value, halfwidth, idle_band, risk_neutral_policy, threshold_dispatch,
    PredictionSetParams,
};
use conformal_arbitrage::domain::{apply_decision_at_price, Soc, StorageSpec};
use conformal_arbitrage::valuefn::MarginalValueCurve;

use common::{decision_grid, random_curve, random_spec};

fn instance(seed: u64) -> (StorageSpec, MarginalValueCurve, Soc) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng);
    let n = rng.random_range(1..6);
    let curve = random_curve(&mut rng, 1.0, n, -10.0, 90.0);
    let soc = Soc::new(rng.random_range(0.0..=1.0), &spec).unwrap();
    (spec, curve, soc)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn risk_neutral_is_feasible_and_grid_optimal(seed in any::<u64>(), price in -30.0f64..130.0) {
        let (spec, curve, soc) = instance(seed);
        let d = risk_neutral_policy(price, soc, &curve, &spec);
        prop_assert!(apply_decision_at_price(soc, &d, price, &spec).is_ok());
        let value = curve.integrate();
        let got = decision_value(price, soc, &d, &value, &spec);
        let best = decision_grid(soc, price, &spec, 501)
            .iter()
            .map(|g| decision_value(price, soc, g, &value, &spec))
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(got >= best - 1e-9 * (1.0 + best.abs()), "got {} best {}", got, best);
    }

    #[test]
    fn wider_margins_never_trade_more(
        seed in any::<u64>(),
        price in -30.0f64..130.0,
        w1 in 0.0f64..40.0,
        extra in 0.0f64..40.0,
    ) {
        let (spec, curve, soc) = instance(seed);
        let narrow = threshold_dispatch(price, soc, &curve, w1, w1, &spec);
        let wide = threshold_dispatch(price, soc, &curve, w1 + extra, w1 + extra, &spec);
        prop_assert!(wide.charge <= narrow.charge + 1e-12);
        prop_assert!(wide.discharge <= narrow.discharge + 1e-12);
    }

    #[test]
    fn conformal_idles_strictly_inside_band(
        seed in any::<u64>(),
        gamma in 0.01f64..1.0,
        sigma in 0.1f64..30.0,
        frac in 0.01f64..0.99,
    ) {
        let (spec, curve, soc) = instance(seed);
        let params = PredictionSetParams { gamma, sigma };
        let (low, high) = idle_band(soc, &curve, &params, &spec);
        prop_assume!(high > low);
        let price = low + frac * (high - low);
        let d = conformal_policy(price, soc, &curve, &params, &spec);
        // the band is computed at the current SoC, so only partial moves
        // that stop immediately are allowed
        prop_assert!(d.net().abs() <= 1e-9, "price {} in ({}, {}] gave {:?}", price, low, high, d);
    }

    #[test]
    fn halfwidth_shrinks_as_gamma_grows(g1 in 0.0f64..2.0, g2 in 0.0f64..2.0, sigma in 0.0f64..50.0) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = halfwidth(&PredictionSetParams { gamma: lo, sigma });
        let b = halfwidth(&PredictionSetParams { gamma: hi, sigma });
        prop_assert!(b <= a + 1e-12);
        prop_assert!(a.is_finite() && a >= 0.0);
    }

    #[test]
    fn gamma_above_one_is_risk_neutral(seed in any::<u64>(), price in -30.0f64..130.0, gamma in 1.0f64..5.0) {
        let (spec, curve, soc) = instance(seed);
        let params = PredictionSetParams { gamma, sigma: 25.0 };
        prop_assert_eq!(
            conformal_policy(price, soc, &curve, &params, &spec),
            risk_neutral_policy(price, soc, &curve, &spec)
        );
    }
}
