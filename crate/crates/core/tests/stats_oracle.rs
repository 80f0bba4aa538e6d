use statrs::distribution::{ContinuousCDF, Normal};

use conformal_arbitrage::dispatch::{halfwidth, PredictionSetParams};
use conformal_arbitrage::stats::{normal_quantile, spearman};

#[test]
fn normal_quantile_matches_reference() {
    let n = Normal::new(0.0, 1.0).unwrap();
    for k in 1..10_000 {
        let p = k as f64 / 10_000.0;
        let ours = normal_quantile(p);
        let reference = n.inverse_cdf(p);
        assert!((ours - reference).abs() <= 1e-8 * (1.0 + reference.abs()), "p={p}: {ours} vs {reference}");
    }
    for p in [1e-12, 1e-9, 1e-6, 1.0 - 1e-6, 1.0 - 1e-9] {
        let reference = n.inverse_cdf(p);
        assert!((normal_quantile(p) - reference).abs() <= 1e-6 * reference.abs());
    }
}

#[test]
fn halfwidth_is_the_two_sided_quantile() {
    let n = Normal::new(0.0, 1.0).unwrap();
    for gamma in [0.01, 0.05, 0.1, 0.5, 0.9] {
        let w = halfwidth(&PredictionSetParams { gamma, sigma: 10.0 });
        assert!((w - 10.0 * n.inverse_cdf(1.0 - gamma / 2.0)).abs() <= 1e-7);
    }
}

#[test]
fn spearman_with_ties_matches_hand_ranks() {
    // ranks of y with ties averaged: [1, 2.5, 2.5, 4]
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [0.1, 0.5, 0.5, 0.9];
    let (rx, ry) = ([1.0, 2.0, 3.0, 4.0], [1.0, 2.5, 2.5, 4.0]);
    let mean = 2.5;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let sx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum::<f64>().sqrt();
    assert!((spearman(&x, &y) - cov / (sx * sy)).abs() <= 1e-12);
}
