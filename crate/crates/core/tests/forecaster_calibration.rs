use conformal_arbitrage::domain::StorageSpec;
use conformal_arbitrage::forecaster::{
    calibrate_noise, measure_r2, oracle_forecast, uniform_midpoints, NoisyOracle, NoisyOracleConfig,
};
use conformal_arbitrage::harness::{synthesize_prices, SyntheticPriceSpec};
use conformal_arbitrage::valuefn::{backward_induct, MarginalValueCurve};

fn truth(steps: usize, seed: u64) -> Vec<MarginalValueCurve> {
    let spec = StorageSpec::from_power_rating(0.5, 1.0, 0.9, 10.0, 5.0 / 60.0).unwrap();
    let prices = synthesize_prices(&SyntheticPriceSpec { steps, ..Default::default() }, seed).unwrap();
    let terminal = MarginalValueCurve::target_soc(1.0, 0.5, prices.mean()).unwrap();
    backward_induct(prices.prices(), &spec, &terminal, None).unwrap()[1..].to_vec()
}

fn pooled_r2(cfg: NoisyOracleConfig, truth: &[MarginalValueCurve]) -> f64 {
    let oracle = NoisyOracle::for_truth(cfg, truth).unwrap();
    let predicted: Vec<_> = truth.iter().enumerate().map(|(t, c)| oracle.perturb(t, c).unwrap()).collect();
    let grid = uniform_midpoints(1.0, 50);
    measure_r2(&predicted, truth, &grid).unwrap().r_squared
}

#[test]
fn oracle_forecast_is_exact() {
    let truth = truth(300, 1);
    let predicted: Vec<_> = (0..truth.len()).map(|t| oracle_forecast(t, &truth).unwrap()).collect();
    let r = measure_r2(&predicted, &truth, &uniform_midpoints(1.0, 50)).unwrap();
    assert_eq!(r.r_squared, 1.0);
    assert_eq!(r.mean_abs_error, 0.0);
}

#[test]
fn calibration_hits_targets_over_many_points() {
    // 2016 curves x 50 grid points, far above 10k pooled samples
    let truth = truth(2016, 4);
    for target in [0.4, -0.4] {
        let cfg = calibrate_noise(target, &truth, &NoisyOracleConfig { seed: 9, ..Default::default() }, 0.01).unwrap();
        let r2 = pooled_r2(cfg, &truth);
        assert!((r2 - target).abs() <= 0.05, "target {target} measured {r2}");
    }
}

#[test]
fn more_noise_means_lower_r2() {
    let truth = truth(500, 2);
    let scales = [0.0, 2.0, 5.0, 10.0, 20.0];
    let r2: Vec<f64> = scales
        .iter()
        .map(|&s| pooled_r2(NoisyOracleConfig { noise_scale: s, seed: 3, ..Default::default() }, &truth))
        .collect();
    assert_eq!(r2[0], 1.0);
    assert!(r2.windows(2).all(|w| w[1] < w[0]), "{r2:?}");
}

#[test]
fn target_above_one_is_rejected() {
    let truth = truth(200, 5);
    let err = calibrate_noise(1.5, &truth, &NoisyOracleConfig::default(), 0.01).unwrap_err();
    assert!(err.to_string().contains("target_r2"), "{err}");
}

#[test]
fn perturbed_curves_stay_monotone() {
    let truth = truth(400, 6);
    let cfg = NoisyOracleConfig {
        noise_scale: 25.0,
        bias: 3.0,
        flip_probability: 0.3,
        correlation_halflife: 12.0,
        seed: 1,
        ..Default::default()
    };
    let oracle = NoisyOracle::for_truth(cfg, &truth).unwrap();
    for (t, c) in truth.iter().enumerate() {
        let p = oracle.perturb(t, c).unwrap();
        assert!(p.values().windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(p.capacity(), c.capacity());
    }
}
