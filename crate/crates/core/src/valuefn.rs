//! Piecewise-constant marginal value curves and the backward valuation
//! recursion over a price series.
//!
//! A [`MarginalValueCurve`] stores the derivative of the value-to-go with
//! respect to SoC as a non-increasing step function. Steps are closed on the
//! left: at an interior breakpoint the curve takes the value of the segment to
//! its right. Integrating a curve gives a concave piecewise-linear
//! [`ValueCurve`] anchored at `Q(0) = 0`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::domain::StorageSpec;
use crate::error::{Error, Result};

/// Breakpoints closer than this fraction of capacity are merged.
const MERGE_TOL: f64 = 1e-9;
/// Default segment count when coarsening curves.
pub const DEFAULT_SEGMENTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalValueCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl MarginalValueCurve {
    /// `breakpoints` has one more entry than `values`, starts at 0 and ends at capacity.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("curve values"));
        }
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::LengthMismatch {
                what: "breakpoints vs values + 1",
                left: breakpoints.len(),
                right: values.len() + 1,
            });
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::invalid("breakpoints", "must start at 0"));
        }
        let capacity = *breakpoints.last().expect("non-empty");
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::invalid("breakpoints", "capacity must be finite and > 0"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("breakpoints", "must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::invalid(
                "values",
                format!("must be non-increasing; segment {} rises to {}", i + 1, values[i + 1]),
            ));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: f64, capacity: f64) -> Result<Self> {
        Self::new(vec![0.0, capacity], vec![value])
    }

    pub fn zero(capacity: f64) -> Self {
        Self {
            breakpoints: vec![0.0, capacity],
            values: vec![0.0],
        }
    }

    /// Terminal curve worth `salvage` $/MWh below `target` SoC and nothing above.
    pub fn target_soc(capacity: f64, target: f64, salvage: f64) -> Result<Self> {
        if !(0.0..=capacity).contains(&target) {
            return Err(Error::SocOutOfRange { soc: target, capacity });
        }
        if salvage < 0.0 {
            return Err(Error::invalid("salvage", "must be >= 0"));
        }
        if target == 0.0 || salvage == 0.0 {
            return Ok(Self::zero(capacity));
        }
        if target == capacity {
            return Self::constant(salvage, capacity);
        }
        Self::new(vec![0.0, target, capacity], vec![salvage, 0.0])
    }

    /// Builds a curve from `(segment_end, value)` pairs; the first segment starts at 0.
    pub fn from_steps(steps: &[(f64, f64)]) -> Result<Self> {
        let mut breakpoints = vec![0.0];
        breakpoints.extend(steps.iter().map(|s| s.0));
        Self::new(breakpoints, steps.iter().map(|s| s.1).collect())
    }

    /// Segment values sampled on a uniform grid of `n` segments over `[0, capacity]`.
    pub fn uniform(capacity: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let breakpoints = (0..=n).map(|i| capacity * i as f64 / n as f64).collect();
        Self::new(breakpoints, values)
    }

    pub fn capacity(&self) -> f64 {
        *self.breakpoints.last().expect("non-empty")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("non-empty")
    }

    /// Index of the segment containing `e`, right-continuous at interior breakpoints.
    fn segment_index(&self, e: f64) -> usize {
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        interior.partition_point(|&b| b <= e)
    }

    /// Marginal value at `e`; `e` outside `[0, E]` is an error.
    pub fn evaluate(&self, e: f64) -> Result<f64> {
        let cap = self.capacity();
        if !(0.0..=cap).contains(&e) {
            return Err(Error::SocOutOfRange { soc: e, capacity: cap });
        }
        Ok(self.values[self.segment_index(e)])
    }

    /// Marginal value at `e` with `e` clamped into `[0, E]`.
    pub fn value_at(&self, e: f64) -> f64 {
        self.values[self.segment_index(e)]
    }

    /// Largest SoC whose marginal value is at least `y`, clamped to `[0, E]`.
    pub fn inverse(&self, y: f64) -> f64 {
        // values are non-increasing, so the qualifying segments form a prefix.
        let k = self.values.partition_point(|&v| v >= y);
        self.breakpoints[k]
    }

    /// Curve with `delta` added to every segment value.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| v + delta).collect(),
        }
    }

    pub fn integrate(&self) -> ValueCurve {
        let mut cumulative = Vec::with_capacity(self.breakpoints.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            acc += v * (self.breakpoints[i + 1] - self.breakpoints[i]);
            cumulative.push(acc);
        }
        ValueCurve {
            breakpoints: self.breakpoints.clone(),
            slopes: self.values.clone(),
            cumulative,
        }
    }

    /// Average value over `[a, b]`.
    fn mean_over(&self, q: &ValueCurve, a: f64, b: f64) -> f64 {
        if b > a {
            (q.value_at(b) - q.value_at(a)) / (b - a)
        } else {
            self.value_at(a)
        }
    }

    /// Coarsens onto `n` equal-width segments, each holding the curve's mean
    /// over that segment. The integral at every new breakpoint is preserved.
    pub fn resample(&self, n: usize) -> Self {
        assert!(n > 0, "resample needs at least one segment");
        let cap = self.capacity();
        let q = self.integrate();
        let mut values: Vec<f64> = (0..n)
            .map(|i| {
                let a = cap * i as f64 / n as f64;
                let b = cap * (i + 1) as f64 / n as f64;
                self.mean_over(&q, a, b)
            })
            .collect();
        // rounding in the averages can produce 1-ulp rises
        for i in 1..values.len() {
            if values[i] > values[i - 1] {
                values[i] = values[i - 1];
            }
        }
        Self::uniform(cap, values).expect("resampled curve is valid")
    }

    /// Values at each point of `grid` (clamped into range).
    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&e| self.value_at(e)).collect()
    }

    /// Largest absolute difference between two curves over their merged breakpoints.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let mut pts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let cap = self.capacity().min(other.capacity());
        pts.windows(2)
            .filter(|w| w[0] < cap)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.value_at(mid) - other.value_at(mid)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Merges adjacent segments with equal values and drops slivers narrower
    /// than the merge tolerance.
    fn from_raw_segments(cap: f64, points: &[f64], values: &[f64]) -> Self {
        let mut breakpoints = vec![0.0];
        let mut merged: Vec<f64> = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            match merged.last() {
                Some(&last) if last == v => {
                    *breakpoints.last_mut().expect("non-empty") = points[i + 1];
                }
                _ => {
                    merged.push(v);
                    breakpoints.push(points[i + 1]);
                }
            }
        }
        *breakpoints.last_mut().expect("non-empty") = cap;
        Self {
            breakpoints,
            values: merged,
        }
    }
}

/// Integrated value curve `Q(e)`, concave and piecewise linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCurve {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ValueCurve {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `Q(e)`; `e` outside `[0, E]` is an error.
    pub fn evaluate(&self, e: f64) -> Result<f64> {
        let cap = *self.breakpoints.last().expect("non-empty");
        if !(0.0..=cap).contains(&e) {
            return Err(Error::SocOutOfRange { soc: e, capacity: cap });
        }
        Ok(self.value_at(e))
    }

    /// `Q(e)` with `e` clamped into `[0, E]`.
    pub fn value_at(&self, e: f64) -> f64 {
        let cap = *self.breakpoints.last().expect("non-empty");
        let e = e.clamp(0.0, cap);
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        let i = interior.partition_point(|&b| b <= e);
        self.cumulative[i] + self.slopes[i] * (e - self.breakpoints[i])
    }
}

/// One Bellman step: the marginal curve of
/// `e ↦ max over feasible (p, b) of λ(p − b) − C·p + Q_next(e')`.
///
/// Built analytically: on every SoC the result is one of the next curve's
/// values (shifted by a full charge or discharge step), the charge level
/// `λ/η`, or the discharge level `(λ − C)·η`.
pub fn bellman_backup(
    next: &MarginalValueCurve,
    price: f64,
    spec: &StorageSpec,
) -> MarginalValueCurve {
    let cap = next.capacity();
    let charge_reach = spec.charge_reach();
    let discharge_reach = spec.discharge_reach();
    let charge_level = price / spec.efficiency;
    let discharge_level = if price < 0.0 {
        f64::NEG_INFINITY
    } else {
        (price - spec.marginal_cost) * spec.efficiency
    };

    let marginal = |e: f64| -> f64 {
        let after_full_charge = e + charge_reach;
        let full_charge = if after_full_charge > cap {
            f64::NEG_INFINITY
        } else {
            next.value_at(after_full_charge)
        };
        let after_full_discharge = e - discharge_reach;
        let full_discharge = if after_full_discharge < 0.0 {
            f64::INFINITY
        } else {
            next.value_at(after_full_discharge)
        };
        let sell_side = next.value_at(e).max(discharge_level.min(full_discharge));
        full_charge.max(charge_level.min(sell_side))
    };

    let mut points: Vec<f64> = Vec::with_capacity(3 * next.breakpoints.len() + 2);
    for &b in &next.breakpoints {
        points.extend([b, b - charge_reach, b + discharge_reach]);
    }
    points.retain(|&x| x > 0.0 && x < cap);
    points.push(0.0);
    points.push(cap);
    points.sort_by(f64::total_cmp);
    let tol = MERGE_TOL * cap;
    let mut dedup: Vec<f64> = Vec::with_capacity(points.len());
    for p in points {
        match dedup.last() {
            Some(&last) if p - last <= tol => {}
            _ => dedup.push(p),
        }
    }
    if *dedup.last().expect("non-empty") != cap {
        // final interior point sat within tol of capacity
        *dedup.last_mut().expect("non-empty") = cap;
    }
    let values: Vec<f64> = dedup
        .windows(2)
        .map(|w| marginal(0.5 * (w[0] + w[1])))
        .collect();
    MarginalValueCurve::from_raw_segments(cap, &dedup, &values)
}

/// Backward recursion over a price series.
///
/// Returns `T + 1` curves: entry `k` is the value-to-go after the first `k`
/// prices have been traded, so entry `T` is `terminal` and entry `0` values
/// the initial SoC. The decision at price index `i` uses entry `i + 1`.
/// With `max_segments` set, curves longer than that are coarsened onto that
/// many uniform segments after every step.
pub fn backward_induct(
    prices: &[f64],
    spec: &StorageSpec,
    terminal: &MarginalValueCurve,
    max_segments: Option<usize>,
) -> Result<Vec<MarginalValueCurve>> {
    if prices.is_empty() {
        return Err(Error::EmptyInput("prices"));
    }
    if (terminal.capacity() - spec.capacity).abs() > MERGE_TOL * spec.capacity {
        return Err(Error::Mismatch(format!(
            "terminal curve capacity {} differs from storage capacity {}",
            terminal.capacity(),
            spec.capacity
        )));
    }
    let mut curves = vec![terminal.clone(); prices.len() + 1];
    for k in (0..prices.len()).rev() {
        let mut c = bellman_backup(&curves[k + 1], prices[k], spec);
        if let Some(n) = max_segments {
            if c.segment_count() > n {
                c = c.resample(n);
            }
        }
        curves[k] = c;
    }
    Ok(curves)
}

/// Writes curves in the `t,soc_start,soc_end,value` columnar format.
pub fn write_curves<W: Write>(mut out: W, curves: &[MarginalValueCurve]) -> Result<()> {
    writeln!(out, "t,soc_start,soc_end,value")?;
    for (t, c) in curves.iter().enumerate() {
        for (i, v) in c.values.iter().enumerate() {
            writeln!(out, "{t},{},{},{v}", c.breakpoints[i], c.breakpoints[i + 1])?;
        }
    }
    Ok(())
}

/// Reads curves written by [`write_curves`]. Rows for one `t` must be contiguous and ordered.
pub fn read_curves<R: BufRead>(input: R) -> Result<Vec<MarginalValueCurve>> {
    let path = std::path::PathBuf::from("<curves>");
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.clone(),
        line,
        message,
    };
    let mut curves = Vec::new();
    let mut current: Option<(usize, Vec<f64>, Vec<f64>)> = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if lineno == 1 {
            if line.trim() != "t,soc_start,soc_end,value" {
                return Err(parse_err(lineno, format!("unexpected header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(lineno, "expected 4 fields".into()));
        }
        let t: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(lineno, format!("t: {e}")))?;
        let nums: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lineno, format!("number: {e}")))?;
        let (start, end, value) = (nums[0], nums[1], nums[2]);
        match &mut current {
            Some((ct, bps, vals)) if *ct == t => {
                if *bps.last().expect("non-empty") != start {
                    return Err(parse_err(lineno, "segments are not contiguous".into()));
                }
                bps.push(end);
                vals.push(value);
            }
            _ => {
                if let Some((_, bps, vals)) = current.take() {
                    curves.push(MarginalValueCurve::new(bps, vals)?);
                }
                if t != curves.len() {
                    return Err(parse_err(lineno, format!("expected t={}", curves.len())));
                }
                current = Some((t, vec![start, end], vec![value]));
            }
        }
    }
    if let Some((_, bps, vals)) = current {
        curves.push(MarginalValueCurve::new(bps, vals)?);
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_step() -> MarginalValueCurve {
        MarginalValueCurve::from_steps(&[(0.5, 50.0), (1.0, 20.0)]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let c = MarginalValueCurve::constant(40.0, 1.0).unwrap();
        assert_eq!(c.evaluate(0.3).unwrap(), 40.0);
        let c = two_step();
        assert_eq!(c.evaluate(0.7).unwrap(), 20.0);
        assert_eq!(c.evaluate(0.5).unwrap(), 20.0);
        assert_eq!(c.evaluate(0.0).unwrap(), 50.0);
        assert_eq!(c.evaluate(1.0).unwrap(), 20.0);
        assert!(matches!(c.evaluate(1.2), Err(Error::SocOutOfRange { .. })));
        assert!(c.evaluate(-0.1).is_err());
    }

    #[test]
    fn inverse_examples() {
        let c = two_step();
        assert_eq!(c.inverse(35.0), 0.5);
        assert_eq!(c.inverse(60.0), 0.0);
        assert_eq!(c.inverse(10.0), 1.0);
        assert_eq!(c.inverse(50.0), 0.5);
        assert_eq!(c.inverse(20.0), 1.0);
    }

    #[test]
    fn inverse_matches_scan() {
        // largest e on a fine grid with q(e) >= y
        let c = MarginalValueCurve::from_steps(&[(0.2, 90.0), (0.45, 40.0), (0.8, 40.0 - 1e-3), (1.0, -5.0)])
            .unwrap();
        for &y in &[100.0, 90.0, 60.0, 40.0, 39.9995, 0.0, -5.0, -6.0] {
            let n = 100_000;
            let mut best = 0.0;
            for i in 0..n {
                let e = i as f64 / n as f64;
                if c.value_at(e) >= y {
                    best = (i + 1) as f64 / n as f64;
                }
            }
            assert!((c.inverse(y) - best).abs() <= 1.0 / n as f64, "y={y}");
        }
    }

    #[test]
    fn construction_rejects_invalid_curves() {
        assert!(MarginalValueCurve::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).is_err());
        assert!(MarginalValueCurve::new(vec![0.1, 1.0], vec![1.0]).is_err());
        assert!(MarginalValueCurve::new(vec![0.0, 0.5, 0.5], vec![2.0, 1.0]).is_err());
        assert!(MarginalValueCurve::new(vec![0.0, 1.0], vec![f64::NAN]).is_err());
        assert!(MarginalValueCurve::new(vec![0.0, 1.0], vec![]).is_err());
    }

    #[test]
    fn integrate_examples() {
        let c = MarginalValueCurve::constant(40.0, 1.0).unwrap().integrate();
        assert_abs_diff_eq!(c.evaluate(0.5).unwrap(), 20.0);
        let q = two_step().integrate();
        assert_abs_diff_eq!(q.evaluate(1.0).unwrap(), 35.0);
        assert_eq!(q.evaluate(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(q.evaluate(0.75).unwrap(), 30.0);
    }

    #[test]
    fn resample_preserves_integral_at_grid_points() {
        let c = MarginalValueCurve::from_steps(&[(0.13, 70.0), (0.61, 35.0), (1.0, 12.0)]).unwrap();
        let r = c.resample(10);
        assert_eq!(r.segment_count(), 10);
        let (q, qr) = (c.integrate(), r.integrate());
        for i in 0..=10 {
            let e = i as f64 / 10.0;
            assert_abs_diff_eq!(q.value_at(e), qr.value_at(e), epsilon = 1e-12);
        }
    }

    #[test]
    fn target_soc_terminal_shape() {
        let c = MarginalValueCurve::target_soc(1.0, 0.5, 30.0).unwrap();
        assert_eq!(c.value_at(0.2), 30.0);
        assert_eq!(c.value_at(0.7), 0.0);
        assert!(MarginalValueCurve::target_soc(1.0, 1.5, 30.0).is_err());
    }

    #[test]
    fn curve_dump_round_trips() {
        let curves = vec![two_step(), MarginalValueCurve::from_steps(&[(0.1 + 0.2, 1.0 / 3.0), (1.0, -2.5)]).unwrap()];
        let mut buf = Vec::new();
        write_curves(&mut buf, &curves).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,soc_start,soc_end,value\n0,0,0.5,50\n"));
        let back = read_curves(&buf[..]).unwrap();
        assert_eq!(back, curves);
    }

    #[test]
    fn read_curves_reports_line_numbers() {
        let bad = "t,soc_start,soc_end,value\n0,0,0.5,50\n0,0.6,1,20\n";
        match read_curves(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
