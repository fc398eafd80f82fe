//! Batch-means confidence intervals and time-integrating accumulators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

pub const MIN_BATCHES: usize = 20;
pub const DEFAULT_BATCHES: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} batches, got {got}")]
    InsufficientBatches { need: usize, got: usize },
    #[error("invalid accumulator setup: {0}")]
    Invalid(&'static str),
}

/// Point estimate with a two-sided 95% Student-t half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub batches: usize,
}

impl Estimate {
    pub fn from_batches(values: &[f64]) -> Result<Self, StatsError> {
        let n = values.len();
        if n < MIN_BATCHES {
            return Err(StatsError::InsufficientBatches { need: MIN_BATCHES, got: n });
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("degrees of freedom are positive")
            .inverse_cdf(0.975);
        Ok(Self {
            mean,
            half_width: t * (var / n as f64).sqrt(),
            batches: n,
        })
    }

    /// `[mean - k*hw, mean + k*hw]`.
    pub fn interval(&self, k: f64) -> (f64, f64) {
        (self.mean - k * self.half_width, self.mean + k * self.half_width)
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.half_width
    }
}

/// Splits `[t0, t0 + batches*batch_len)` into equal batches and integrates
/// piecewise-constant channel levels over time. Impulses (jump counts) are
/// added to the batch containing the current clock. Finished batch values
/// are divided by the batch length, so levels become time averages and
/// impulses become rates.
#[derive(Debug, Clone)]
pub struct TimeBatcher {
    t0: f64,
    batch_len: f64,
    batches: usize,
    clock: f64,
    levels: Vec<f64>,
    sums: Vec<Vec<f64>>,
}

impl TimeBatcher {
    pub fn new(t0: f64, horizon: f64, batches: usize, channels: usize) -> Result<Self, StatsError> {
        if batches == 0 || !(horizon > 0.0) {
            return Err(StatsError::Invalid("batches and horizon must be positive"));
        }
        Ok(Self {
            t0,
            batch_len: horizon / batches as f64,
            batches,
            clock: t0,
            levels: vec![0.0; channels],
            sums: vec![vec![0.0; channels]; batches],
        })
    }

    pub fn batch_len(&self) -> f64 {
        self.batch_len
    }

    fn batch_of(&self, t: f64) -> usize {
        (((t - self.t0) / self.batch_len) as usize).min(self.batches - 1)
    }

    #[inline]
    pub fn set(&mut self, channel: usize, level: f64) {
        self.levels[channel] = level;
    }

    #[inline]
    pub fn level(&self, channel: usize) -> f64 {
        self.levels[channel]
    }

    #[inline]
    pub fn impulse(&mut self, channel: usize, amount: f64) {
        let b = self.batch_of(self.clock);
        self.sums[b][channel] += amount;
    }

    /// Integrates the current levels from the clock up to `t`.
    pub fn advance_to(&mut self, t: f64) {
        let end = t.min(self.t0 + self.batch_len * self.batches as f64);
        while self.clock < end {
            let b = self.batch_of(self.clock);
            let boundary = if b + 1 == self.batches {
                end
            } else {
                (self.t0 + (b + 1) as f64 * self.batch_len).min(end)
            };
            let dt = boundary - self.clock;
            for (s, l) in self.sums[b].iter_mut().zip(&self.levels) {
                *s += l * dt;
            }
            // guard against a boundary that rounds onto the clock
            self.clock = if boundary > self.clock { boundary } else { end };
        }
        self.clock = self.clock.max(t.min(end));
    }

    /// Per-batch averages, `result[batch][channel]`.
    pub fn finish(mut self) -> Vec<Vec<f64>> {
        let end = self.t0 + self.batch_len * self.batches as f64;
        self.advance_to(end);
        let len = self.batch_len;
        self.sums
            .into_iter()
            .map(|row| row.into_iter().map(|s| s / len).collect())
            .collect()
    }
}

/// Column `channel` of a batch table.
pub fn column(table: &[Vec<f64>], channel: usize) -> Vec<f64> {
    table.iter().map(|row| row[channel]).collect()
}

/// Ordinary least squares fit `y = a + b x`, returning `(a, b, t-statistic of b)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    (intercept, slope, slope / se)
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_of_known_sample() {
        let v: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let e = Estimate::from_batches(&v).unwrap();
        assert!((e.mean - 14.5).abs() < 1e-12);
        // sd = sqrt(77.5), t_{29, 0.975} = 2.04523
        let want = 2.045_229_6 * (77.5f64 / 30.0).sqrt();
        assert!((e.half_width - want).abs() < 1e-5, "{}", e.half_width);
        assert!(Estimate::from_batches(&v[..10]).is_err());
    }

    #[test]
    fn batcher_integrates_levels_and_impulses() {
        let mut b = TimeBatcher::new(0.0, 10.0, 2, 2).unwrap();
        b.set(0, 1.0);
        b.advance_to(3.0);
        b.set(0, 3.0);
        b.impulse(1, 1.0);
        b.advance_to(7.0);
        b.impulse(1, 4.0);
        b.set(0, 0.0);
        let t = b.finish();
        // batch 0: 3*1 + 2*3 = 9 over 5; batch 1: 2*3 = 6 over 5
        assert!((t[0][0] - 1.8).abs() < 1e-12);
        assert!((t[1][0] - 1.2).abs() < 1e-12);
        assert!((t[0][1] - 0.2).abs() < 1e-12);
        assert!((t[1][1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ols_recovers_a_line() {
        let x: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v + if (*v as i64) % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let (a, b, t) = ols(&x, &y);
        assert!((a - 2.0).abs() < 0.1 && (b - 0.5).abs() < 1e-2 && t > 100.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
