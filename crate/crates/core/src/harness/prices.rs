//! Price ingestion and the synthetic price generator.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::PriceSeries;
use crate::error::{Error, Result};

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Parses an ISO-8601 timestamp; offsets are converted to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// Loads a `timestamp,price` CSV with a header row.
pub fn load_prices(path: &Path, allow_gaps: bool) -> Result<PriceSeries> {
    let file = std::fs::File::open(path)?;
    read_prices(file, path, allow_gaps)
}

/// [`load_prices`] over any reader; `path` only labels errors.
pub fn read_prices<R: Read>(input: R, path: &Path, allow_gaps: bool) -> Result<PriceSeries> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut prices = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    let mut saw_header = false;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !saw_header {
            saw_header = true;
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols.len() != 2 || !cols[0].eq_ignore_ascii_case("timestamp") {
                return Err(parse_err(lineno, format!("expected header `timestamp,price`, got `{trimmed}`")));
            }
            continue;
        }
        let (ts, price) = trimmed
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, "expected two columns".into()))?;
        let ts = parse_timestamp(ts)
            .ok_or_else(|| parse_err(lineno, format!("bad timestamp `{}`", ts.trim())))?;
        let price: f64 = price
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad price `{}`", price.trim())))?;
        if !price.is_finite() {
            return Err(parse_err(lineno, "price is not finite".into()));
        }
        if let Some(prev) = timestamps.last() {
            if ts <= *prev {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    line: lineno,
                });
            }
        }
        timestamps.push(ts);
        prices.push(price);
        lines.push(lineno);
    }
    if prices.is_empty() {
        return Err(Error::EmptyInput("price file"));
    }
    if !allow_gaps && timestamps.len() > 2 {
        let deltas: Vec<i64> = timestamps
            .windows(2)
            .map(|w| (w[1] - w[0]).num_seconds())
            .collect();
        let mut counts: HashMap<i64, usize> = HashMap::new();
        for &d in &deltas {
            *counts.entry(d).or_default() += 1;
        }
        let modal = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&d, _)| d)
            .expect("non-empty");
        if let Some(k) = deltas.iter().position(|&d| d > 2 * modal) {
            return Err(Error::Gap {
                path: path.to_path_buf(),
                line: lines[k + 1],
                gap_seconds: deltas[k],
                modal_seconds: modal,
            });
        }
    }
    PriceSeries::new(timestamps, prices)
}

pub fn write_prices<W: Write>(out: W, series: &PriceSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "price"])?;
    for (ts, p) in series.timestamps().iter().zip(series.prices()) {
        w.write_record([format_timestamp(ts), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Daily sinusoid plus AR(1) noise plus occasional upward spikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPriceSpec {
    pub steps: usize,
    /// Mean price level ($/MWh).
    pub level: f64,
    pub daily_amplitude: f64,
    /// Steps per daily cycle.
    pub period_steps: usize,
    /// Phase of the cycle at step 0, radians.
    pub phase: f64,
    pub ar_coefficient: f64,
    /// Stationary standard deviation of the AR(1) component.
    pub noise_std: f64,
    pub spike_probability: f64,
    /// Mean spike height (exponential).
    pub spike_mean: f64,
    pub interval_minutes: u32,
}

impl Default for SyntheticPriceSpec {
    fn default() -> Self {
        Self {
            steps: 2016,
            level: 40.0,
            daily_amplitude: 15.0,
            period_steps: 288,
            phase: -std::f64::consts::FRAC_PI_2,
            ar_coefficient: 0.95,
            noise_std: 6.0,
            spike_probability: 0.005,
            spike_mean: 60.0,
            interval_minutes: 5,
        }
    }
}

impl SyntheticPriceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be >= 1"));
        }
        if self.period_steps == 0 {
            return Err(Error::invalid("period_steps", "must be >= 1"));
        }
        if self.ar_coefficient.is_nan() || self.ar_coefficient.abs() >= 1.0 {
            return Err(Error::invalid("ar_coefficient", "must lie in (-1, 1)"));
        }
        if !(self.noise_std >= 0.0 && self.spike_mean >= 0.0) {
            return Err(Error::invalid("noise_std", "noise and spike sizes must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.spike_probability) {
            return Err(Error::invalid("spike_probability", "must lie in [0, 1]"));
        }
        if self.interval_minutes == 0 {
            return Err(Error::invalid("interval_minutes", "must be >= 1"));
        }
        for (name, v) in [("level", self.level), ("daily_amplitude", self.daily_amplitude), ("phase", self.phase)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Deterministic part at step `t`.
    pub fn shape(&self, t: usize) -> f64 {
        let angle = 2.0 * std::f64::consts::PI * t as f64 / self.period_steps as f64 + self.phase;
        self.level + self.daily_amplitude * angle.sin()
    }
}

/// Generates `spec.steps` prices from 2023-01-01; identical for identical seeds.
pub fn synthesize_prices(spec: &SyntheticPriceSpec, seed: u64) -> Result<PriceSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = spec.ar_coefficient;
    let innov = spec.noise_std * (1.0 - phi * phi).sqrt();
    let spike = if spec.spike_mean > 0.0 {
        Some(Exp::new(1.0 / spec.spike_mean).map_err(|e| Error::invalid("spike_mean", e.to_string()))?)
    } else {
        None
    };
    let mut ar = {
        let z: f64 = StandardNormal.sample(&mut rng);
        spec.noise_std * z
    };
    let mut prices = Vec::with_capacity(spec.steps);
    for t in 0..spec.steps {
        if t > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            ar = phi * ar + innov * z;
        }
        let mut p = spec.shape(t) + ar;
        let u: f64 = rng.random();
        if let Some(dist) = spike {
            if u < spec.spike_probability {
                p += dist.sample(&mut rng);
            }
        }
        prices.push(p);
    }
    let start = NaiveDate::from_ymd_opt(2023, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");
    PriceSeries::regular(start, chrono::Duration::minutes(spec.interval_minutes as i64), prices)
}
