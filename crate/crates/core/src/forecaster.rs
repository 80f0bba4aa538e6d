//! Synthetic forecasters of the marginal value curve.
//!
//! The forecasters start from ground-truth curves (computed by backward
//! induction on the realized prices) and degrade them in a controlled,
//! seeded way so that forecast accuracy, measured as pooled R², can be dialed
//! in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::isotonic_non_increasing;
use crate::valuefn::{MarginalValueCurve, DEFAULT_SEGMENTS};

/// Produces the forecast curve used for the decision at step `t`.
///
/// `truth` holds one curve per decision step; implementations must only use
/// it as the source being degraded, never to peek at other steps' values.
pub trait ForecastSource {
    fn forecast(
        &mut self,
        t: usize,
        price_history: &[f64],
        truth: &[MarginalValueCurve],
    ) -> Result<MarginalValueCurve>;
}

/// Returns `truth_curves[t]` unchanged.
pub fn oracle_forecast(t: usize, truth_curves: &[MarginalValueCurve]) -> Result<MarginalValueCurve> {
    truth_curves
        .get(t)
        .cloned()
        .ok_or(Error::IndexOutOfRange {
            index: t,
            len: truth_curves.len(),
        })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleForecaster;

impl ForecastSource for OracleForecaster {
    fn forecast(
        &mut self,
        t: usize,
        _price_history: &[f64],
        truth: &[MarginalValueCurve],
    ) -> Result<MarginalValueCurve> {
        oracle_forecast(t, truth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisyOracleConfig {
    /// Marginal standard deviation of the additive noise ($/MWh).
    pub noise_scale: f64,
    /// Constant offset added to every forecast value ($/MWh).
    pub bias: f64,
    /// Half-life of the AR(1) temporal correlation of the noise, in steps (0 = white).
    pub correlation_halflife: f64,
    /// Share of noise variance common to all SoC cells of one step.
    pub common_share: f64,
    /// Per-step probability that the curve is reflected about the pivot level.
    pub flip_probability: f64,
    /// Number of uniform SoC cells the noise field lives on.
    pub segments: usize,
    pub seed: u64,
}

impl Default for NoisyOracleConfig {
    fn default() -> Self {
        Self {
            noise_scale: 0.0,
            bias: 0.0,
            correlation_halflife: 0.0,
            common_share: 0.5,
            flip_probability: 0.0,
            segments: DEFAULT_SEGMENTS,
            seed: 0,
        }
    }
}

impl NoisyOracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::invalid("noise_scale", "must be finite and >= 0"));
        }
        if !self.bias.is_finite() {
            return Err(Error::invalid("bias", "must be finite"));
        }
        if !(self.correlation_halflife.is_finite() && self.correlation_halflife >= 0.0) {
            return Err(Error::invalid("correlation_halflife", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.common_share) {
            return Err(Error::invalid("common_share", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::invalid("flip_probability", "must lie in [0, 1]"));
        }
        if self.segments == 0 {
            return Err(Error::invalid("segments", "must be >= 1"));
        }
        Ok(())
    }

    /// AR(1) coefficient implied by the half-life.
    pub fn ar_coefficient(&self) -> f64 {
        if self.correlation_halflife > 0.0 {
            0.5f64.powf(1.0 / self.correlation_halflife)
        } else {
            0.0
        }
    }
}

/// Truth curves perturbed by seeded, temporally correlated noise and then
/// projected back onto non-increasing curves.
///
/// Unit-variance noise paths are drawn once at construction, so the scale can
/// be changed (see [`NoisyOracle::with_scale`]) without redrawing.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    cfg: NoisyOracleConfig,
    capacity: f64,
    /// `noise[t][j]`, unit marginal variance.
    noise: Vec<Vec<f64>>,
    flips: Vec<bool>,
    pivot: f64,
}

impl NoisyOracle {
    /// Draws noise for `horizon` steps. `pivot` is the level flips reflect about.
    pub fn new(cfg: NoisyOracleConfig, capacity: f64, horizon: usize, pivot: f64) -> Result<Self> {
        cfg.validate()?;
        let phi = cfg.ar_coefficient();
        let innov = (1.0 - phi * phi).sqrt();
        let n = cfg.segments;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut flip_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_F00D);
        let flip = Bernoulli::new(cfg.flip_probability)
            .map_err(|e| Error::invalid("flip_probability", e.to_string()))?;
        let (w_common, w_idio) = (cfg.common_share.sqrt(), (1.0 - cfg.common_share).sqrt());

        let mut common = 0.0;
        let mut idio = vec![0.0; n];
        let mut noise = Vec::with_capacity(horizon);
        let mut flips = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
            if t == 0 {
                common = draw(&mut rng);
                for x in idio.iter_mut() {
                    *x = draw(&mut rng);
                }
            } else {
                common = phi * common + innov * draw(&mut rng);
                for x in idio.iter_mut() {
                    *x = phi * *x + innov * draw(&mut rng);
                }
            }
            noise.push(idio.iter().map(|x| w_common * common + w_idio * x).collect());
            flips.push(flip.sample(&mut flip_rng));
        }
        Ok(Self {
            cfg,
            capacity,
            noise,
            flips,
            pivot,
        })
    }

    /// Builds a forecaster for a truth series, pivoting flips about the mean truth value.
    pub fn for_truth(cfg: NoisyOracleConfig, truth: &[MarginalValueCurve]) -> Result<Self> {
        let first = truth.first().ok_or(Error::EmptyInput("truth curves"))?;
        let grid = uniform_midpoints(first.capacity(), cfg.segments);
        let (sum, count) = truth.iter().fold((0.0, 0usize), |(s, c), curve| {
            (s + curve.sample(&grid).iter().sum::<f64>(), c + grid.len())
        });
        Self::new(cfg, first.capacity(), truth.len(), sum / count as f64)
    }

    pub fn config(&self) -> &NoisyOracleConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> usize {
        self.noise.len()
    }

    /// Same noise paths at a different scale.
    pub fn with_scale(&self, noise_scale: f64) -> Self {
        let mut out = self.clone();
        out.cfg.noise_scale = noise_scale;
        out
    }

    /// Perturbed, monotone-repaired version of `truth`, the curve for step `t`.
    pub fn perturb(&self, t: usize, truth: &MarginalValueCurve) -> Result<MarginalValueCurve> {
        let noise = self.noise.get(t).ok_or(Error::IndexOutOfRange {
            index: t,
            len: self.noise.len(),
        })?;
        let flip = self.flips[t];
        if self.cfg.noise_scale == 0.0 && self.cfg.bias == 0.0 && !flip {
            return Ok(truth.clone());
        }
        let n = self.cfg.segments;
        let cap = self.capacity;
        // union of truth breakpoints and the noise grid
        let mut pts: Vec<f64> = truth.breakpoints().to_vec();
        pts.extend((1..n).map(|j| cap * j as f64 / n as f64));
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * cap);
        *pts.last_mut().expect("non-empty") = cap;

        let mut values = Vec::with_capacity(pts.len() - 1);
        let mut widths = Vec::with_capacity(pts.len() - 1);
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let cell = ((mid / cap * n as f64) as usize).min(n - 1);
            let mut v = truth.value_at(mid);
            if flip {
                v = 2.0 * self.pivot - v;
            }
            values.push(v + self.cfg.bias + self.cfg.noise_scale * noise[cell]);
            widths.push(w[1] - w[0]);
        }
        let repaired = isotonic_non_increasing(&values, &widths);
        let mut bps = vec![0.0];
        let mut vals: Vec<f64> = Vec::with_capacity(repaired.len());
        for (i, v) in repaired.into_iter().enumerate() {
            if vals.last() == Some(&v) {
                *bps.last_mut().expect("non-empty") = pts[i + 1];
            } else {
                vals.push(v);
                bps.push(pts[i + 1]);
            }
        }
        MarginalValueCurve::new(bps, vals)
    }
}

impl ForecastSource for NoisyOracle {
    fn forecast(
        &mut self,
        t: usize,
        _price_history: &[f64],
        truth: &[MarginalValueCurve],
    ) -> Result<MarginalValueCurve> {
        let curve = truth.get(t).ok_or(Error::IndexOutOfRange {
            index: t,
            len: truth.len(),
        })?;
        self.perturb(t, curve)
    }
}

/// One-shot form of [`NoisyOracle::perturb`]; redraws the noise on every call.
pub fn noisy_oracle_forecast(
    t: usize,
    truth_curves: &[MarginalValueCurve],
    cfg: &NoisyOracleConfig,
) -> Result<MarginalValueCurve> {
    let oracle = NoisyOracle::for_truth(*cfg, truth_curves)?;
    oracle.perturb(t, &truth_curves[t.min(truth_curves.len() - 1)])
        .and_then(|c| if t < truth_curves.len() { Ok(c) } else {
            Err(Error::IndexOutOfRange { index: t, len: truth_curves.len() })
        })
}

/// Cell midpoints of a uniform `n`-cell grid on `[0, capacity]`.
pub fn uniform_midpoints(capacity: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| capacity * (j as f64 + 0.5) / n as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub r_squared: f64,
    pub mean_abs_error: f64,
    pub count: usize,
}

/// Pooled R² over every (step, grid point) pair: `1 − SSE/SST` with SST
/// about the grand mean of the truth values.
pub fn measure_r2(
    predicted: &[MarginalValueCurve],
    truth: &[MarginalValueCurve],
    grid: &[f64],
) -> Result<AccuracyReport> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "predicted vs truth curves",
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() || grid.is_empty() {
        return Err(Error::EmptyInput("curves for R^2"));
    }
    let truth_vals: Vec<Vec<f64>> = truth.iter().map(|c| c.sample(grid)).collect();
    let count = truth.len() * grid.len();
    let mean = truth_vals.iter().flatten().sum::<f64>() / count as f64;
    let (mut sse, mut sst, mut sae) = (0.0, 0.0, 0.0);
    for (p, tv) in predicted.iter().zip(&truth_vals) {
        for (pv, y) in p.sample(grid).into_iter().zip(tv) {
            let err = pv - y;
            sse += err * err;
            sae += err.abs();
            sst += (y - mean).powi(2);
        }
    }
    if sst <= f64::EPSILON * count as f64 * mean.abs().max(1.0) {
        return Err(Error::Degenerate(format!(
            "truth values have zero variance over {count} points"
        )));
    }
    Ok(AccuracyReport {
        r_squared: 1.0 - sse / sst,
        mean_abs_error: sae / count as f64,
        count,
    })
}

/// Searches `noise_scale` (keeping the rest of `template`) so that the pooled
/// R² of the noisy oracle over `truth` lands within `tolerance` of `target_r2`.
pub fn calibrate_noise(
    target_r2: f64,
    truth: &[MarginalValueCurve],
    template: &NoisyOracleConfig,
    tolerance: f64,
) -> Result<NoisyOracleConfig> {
    if !(target_r2.is_finite() && target_r2 <= 1.0) {
        return Err(Error::invalid("target_r2", "must be finite and <= 1"));
    }
    let first = truth.first().ok_or(Error::EmptyInput("truth curves"))?;
    let grid = uniform_midpoints(first.capacity(), template.segments);
    let base = NoisyOracle::for_truth(*template, truth)?;
    let r2_at = |scale: f64| -> Result<f64> {
        let oracle = base.with_scale(scale);
        let predicted = truth
            .iter()
            .enumerate()
            .map(|(t, c)| oracle.perturb(t, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(measure_r2(&predicted, truth, &grid)?.r_squared)
    };
    let with_scale = |s: f64| NoisyOracleConfig {
        noise_scale: s,
        ..*template
    };

    let r0 = r2_at(0.0)?;
    if (r0 - target_r2).abs() <= tolerance {
        return Ok(with_scale(0.0));
    }
    if r0 < target_r2 {
        return Err(Error::Calibration {
            target: target_r2,
            low: f64::NEG_INFINITY,
            high: r0,
        });
    }
    // expand until the R² drops below target
    let mut lo = 0.0;
    let mut hi = first.max_value().abs().max(first.min_value().abs()).max(1.0) * 0.1;
    let mut r_hi = r2_at(hi)?;
    let mut expansions = 0;
    while r_hi > target_r2 {
        lo = hi;
        hi *= 2.0;
        r_hi = r2_at(hi)?;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Calibration {
                target: target_r2,
                low: r_hi,
                high: r0,
            });
        }
    }
    if (r_hi - target_r2).abs() <= tolerance / 4.0 {
        return Ok(with_scale(hi));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let r = r2_at(mid)?;
        if (r - target_r2).abs() <= tolerance / 4.0 {
            return Ok(with_scale(mid));
        }
        if r > target_r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r_lo = r2_at(lo)?;
    let r_hi = r2_at(hi)?;
    let best = if (r_lo - target_r2).abs() < (r_hi - target_r2).abs() { lo } else { hi };
    let r_best = r2_at(best)?;
    if (r_best - target_r2).abs() <= tolerance {
        Ok(with_scale(best))
    } else {
        Err(Error::Calibration {
            target: target_r2,
            low: r_hi,
            high: r_lo,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(n: usize) -> Vec<MarginalValueCurve> {
        (0..n)
            .map(|t| {
                let level = 40.0 + 15.0 * (t as f64 * 0.3).sin();
                MarginalValueCurve::from_steps(&[(0.3, level + 10.0), (0.7, level), (1.0, level - 8.0)])
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn oracle_is_identity() {
        let tr = truth(5);
        assert_eq!(oracle_forecast(3, &tr).unwrap(), tr[3]);
        assert!(matches!(oracle_forecast(5, &tr), Err(Error::IndexOutOfRange { .. })));
        let grid = uniform_midpoints(1.0, 20);
        assert_eq!(measure_r2(&tr, &tr, &grid).unwrap().r_squared, 1.0);
    }

    #[test]
    fn zero_noise_is_oracle() {
        let tr = truth(10);
        let cfg = NoisyOracleConfig { seed: 7, ..Default::default() };
        for t in 0..10 {
            assert_eq!(noisy_oracle_forecast(t, &tr, &cfg).unwrap(), tr[t]);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let tr = truth(30);
        let cfg = NoisyOracleConfig { noise_scale: 5.0, correlation_halflife: 3.0, seed: 11, ..Default::default() };
        let a = NoisyOracle::for_truth(cfg, &tr).unwrap();
        let b = NoisyOracle::for_truth(cfg, &tr).unwrap();
        for (t, c) in tr.iter().enumerate() {
            assert_eq!(a.perturb(t, c).unwrap(), b.perturb(t, c).unwrap());
        }
        let c = NoisyOracle::for_truth(NoisyOracleConfig { seed: 12, ..cfg }, &tr).unwrap();
        assert_ne!(a.perturb(0, &tr[0]).unwrap(), c.perturb(0, &tr[0]).unwrap());
    }

    #[test]
    fn r2_examples() {
        let tr = truth(40);
        let grid = uniform_midpoints(1.0, 10);
        let vals: Vec<f64> = tr.iter().flat_map(|c| c.sample(&grid)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        let flat: Vec<_> = tr.iter().map(|_| MarginalValueCurve::constant(mean, 1.0).unwrap()).collect();
        assert!(measure_r2(&flat, &tr, &grid).unwrap().r_squared.abs() < 1e-12);
        let shifted: Vec<_> = tr.iter().map(|c| c.shifted(2.0 * sd)).collect();
        let rep = measure_r2(&shifted, &tr, &grid).unwrap();
        assert!((rep.r_squared + 3.0).abs() < 1e-9);
        assert!((rep.mean_abs_error - 2.0 * sd).abs() < 1e-9);
    }

    #[test]
    fn r2_errors() {
        let tr = truth(3);
        let grid = uniform_midpoints(1.0, 4);
        assert!(measure_r2(&tr[..2], &tr, &grid).is_err());
        assert!(matches!(measure_r2(&[], &[], &grid), Err(Error::EmptyInput(_))));
        let flat = vec![MarginalValueCurve::constant(3.0, 1.0).unwrap(); 3];
        assert!(matches!(measure_r2(&flat, &flat, &grid), Err(Error::Degenerate(_))));
    }

    #[test]
    fn flips_reflect_about_pivot() {
        let tr = truth(4);
        let cfg = NoisyOracleConfig { flip_probability: 1.0, ..Default::default() };
        let oracle = NoisyOracle::new(cfg, 1.0, 4, 40.0).unwrap();
        let f = oracle.perturb(0, &tr[0]).unwrap();
        // reflected curve is increasing; the isotonic repair flattens it to its mean
        assert_eq!(f.segment_count(), 1);
    }
}
