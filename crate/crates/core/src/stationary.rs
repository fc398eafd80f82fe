//! Stationary regime: Loynes backward sampling, ergodic estimators and
//! rate-conservation diagnostics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driving::{DrivingError, DrivingStream};
use crate::dynamics::{run, DynamicsConfig, DynamicsError, InitialCondition, Outcome, ProbeSpec, System};
use crate::lattice::{Region, Site};
use crate::stats::{column, Estimate, StatsError, TimeBatcher, DEFAULT_BATCHES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error("site {site} still growing at past depth {depth}: {values:?}")]
    NotConverged { site: Site, depth: f64, values: Vec<u64> },
    #[error("ergodic estimates need torus mode")]
    NotTorus,
    #[error("ergodic estimates do not support frozen queues")]
    FrozenQueues,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Driving(#[from] DrivingError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Values at monitored sites at time 0 for empty starts at `-depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoynesSample {
    pub sites: Vec<Site>,
    pub depths: Vec<f64>,
    /// `values[site][k]` for past depth `depths[k]`.
    pub values: Vec<Vec<u64>>,
    /// Smallest depth at which the value had been unchanged across two
    /// consecutive doublings.
    pub converged_at: Vec<Option<f64>>,
}

impl LoynesSample {
    /// Whether every sequence is nondecreasing in depth.
    pub fn is_monotone(&self) -> bool {
        self.values.iter().all(|v| v.windows(2).all(|w| w[0] <= w[1]))
    }

    pub fn all_converged(&self) -> bool {
        self.converged_at.iter().all(Option::is_some)
    }

    pub fn final_values(&self) -> Vec<u64> {
        self.values.iter().map(|v| *v.last().unwrap_or(&0)).collect()
    }

    pub fn require_converged(&self) -> Result<&Self, StationaryError> {
        for (k, c) in self.converged_at.iter().enumerate() {
            if c.is_none() {
                return Err(StationaryError::NotConverged {
                    site: self.sites[k].clone(),
                    depth: *self.depths.last().unwrap_or(&0.0),
                    values: self.values[k].clone(),
                });
            }
        }
        Ok(self)
    }
}

/// Runs the empty system from `-t0 * 2^k` to 0 for `k = 0..=max_doublings`
/// on shared driving data.
pub fn loynes_sample(
    config: &DynamicsConfig,
    sites: &[Site],
    t0: f64,
    max_doublings: u32,
    driving: &DrivingStream,
) -> Result<LoynesSample, StationaryError> {
    if !(t0 > 0.0) {
        return Err(StationaryError::InvalidParameter("initial past depth must be positive"));
    }
    let lattice = std::sync::Arc::new(config.lattice().map_err(DynamicsError::from)?);
    let depths: Vec<f64> = (0..=max_doublings).map(|k| t0 * 2f64.powi(k as i32)).collect();
    let positions: Vec<Option<usize>> = sites.iter().map(|s| lattice.position(s)).collect();
    let mut values = vec![Vec::with_capacity(depths.len()); sites.len()];
    for &depth in &depths {
        let mut system = System::with_lattice(lattice.clone(), config, &InitialCondition::Zero, -depth)?;
        system.advance(driving, 0.0)?;
        for (k, p) in positions.iter().enumerate() {
            values[k].push(p.map(|p| system.raw_counts()[p]).unwrap_or(0));
        }
    }
    let converged_at = values
        .iter()
        .map(|v| (2..v.len()).find(|&k| v[k] == v[k - 1] && v[k - 1] == v[k - 2]).map(|k| depths[k]))
        .collect();
    Ok(LoynesSample {
        sites: sites.to_vec(),
        depths,
        values,
        converged_at,
    })
}

/// Value at `site` and time 0 from an empty start at `-depth`.
pub fn backward_value(config: &DynamicsConfig, site: &Site, depth: f64, driving: &DrivingStream) -> Result<u64, StationaryError> {
    let out = run(config, &InitialCondition::Zero, driving, -depth, 0.0, &ProbeSpec::default())?;
    Ok(out.system.count(site).and_then(|c| c.finite()).unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicOptions {
    pub burn_in: f64,
    pub horizon: f64,
    pub batches: usize,
    /// Lags along the first axis for the covariance curve.
    pub lags: Vec<u32>,
    /// Track the origin's departure probability and rate-balance terms.
    /// Costs `O(|support|^2)` per event near the origin.
    pub balance: bool,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            burn_in: 2e4,
            horizon: 2e5,
            batches: DEFAULT_BATCHES,
            lags: Vec::new(),
            balance: true,
        }
    }
}

const CH_MEAN: usize = 0;
const CH_SECOND: usize = 1;
const CH_X0: usize = 2;
const CH_X0_SQ: usize = 3;
const CH_R0: usize = 4;
const CH_DEP0: usize = 5;
const CH_I_UP: usize = 6;
const CH_I_DOWN: usize = 7;
const CH_MT_LHS: usize = 8;
const CH_MT_RHS: usize = 9;
const CH_LAG0: usize = 10;

/// Batch table of one replica: `rows[batch][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTable {
    pub seed: u64,
    pub batch_len: f64,
    pub rows: Vec<Vec<f64>>,
    pub lags: Vec<u32>,
}

impl BatchTable {
    /// Site-averaged mean of this replica.
    pub fn mean(&self) -> f64 {
        average(&self.rows, CH_MEAN)
    }

    /// Site-averaged second moment of this replica.
    pub fn second_moment(&self) -> f64 {
        average(&self.rows, CH_SECOND)
    }
}

fn average(rows: &[Vec<f64>], ch: usize) -> f64 {
    rows.iter().map(|r| r[ch]).sum::<f64>() / rows.len().max(1) as f64
}

/// Runs one replica and returns time-averaged channels per batch.
pub fn ergodic_batches(
    config: &DynamicsConfig,
    initial: &InitialCondition,
    driving: &DrivingStream,
    opts: &ErgodicOptions,
) -> Result<BatchTable, StationaryError> {
    if !matches!(config.region, Region::Torus { .. }) {
        return Err(StationaryError::NotTorus);
    }
    if !config.frozen.is_empty() {
        return Err(StationaryError::FrozenQueues);
    }
    if !(opts.horizon > 0.0) || opts.burn_in < 0.0 {
        return Err(StationaryError::InvalidParameter("horizon must be positive and burn-in nonnegative"));
    }
    let mut system = System::new(config, initial, 0.0)?;
    system.advance(driving, opts.burn_in)?;
    let lattice = system.lattice().clone();
    let seq = &config.seq;
    let dim = seq.dim();
    let n = lattice.len() as f64;
    let origin = Site::origin(dim);
    let o = lattice.position(&origin).expect("torus contains the origin");
    let reach = 2 * seq.radius();
    let near: Vec<bool> = lattice.sites().iter().map(|s| opts.balance && s.sup_norm() <= reach).collect();
    // (position of origin + offset, weight), split by whether the offset is 0
    let mut around: Vec<(usize, f64)> = Vec::new();
    let mut a0 = 0.0;
    for (offset, &w) in seq.offsets().iter().zip(seq.weights()) {
        if offset.is_origin() {
            a0 = w;
        } else {
            around.push((lattice.shifted(&origin, offset).expect("torus shift"), w));
        }
    }
    let lag_tables: Vec<(Vec<usize>, Vec<usize>)> = opts
        .lags
        .iter()
        .map(|&k| {
            let plus = Site::axis(dim, k as i64);
            let minus = plus.neg();
            let fwd = lattice.sites().iter().map(|s| lattice.shifted(s, &plus).expect("torus shift")).collect();
            let back = lattice.sites().iter().map(|s| lattice.shifted(s, &minus).expect("torus shift")).collect();
            (fwd, back)
        })
        .collect();

    let counts = system.raw_counts();
    let mut sum_x: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut sum_x2: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    let mut lag_sums: Vec<f64> = lag_tables
        .iter()
        .map(|(fwd, _)| (0..counts.len()).map(|p| counts[p] as f64 * counts[fwd[p]] as f64).sum())
        .collect();

    let origin_terms = |sys: &System| -> (f64, f64, f64, f64) {
        let c = sys.raw_counts();
        let x0 = c[o] as f64;
        let r0 = sys.rate_at(o);
        let mut lhs = 0.0;
        let mut weighted = 0.0;
        for &(p, w) in &around {
            lhs += sys.rate_at(p) * w * x0;
            weighted += w * c[p] as f64;
        }
        let interference = a0 * x0 + weighted;
        (r0, lhs, r0 * weighted, x0 * interference)
    };

    let channels = CH_LAG0 + opts.lags.len();
    let mut batcher = TimeBatcher::new(opts.burn_in, opts.horizon, opts.batches, channels)?;
    let set_levels = |b: &mut TimeBatcher, sx: f64, sx2: f64, lags: &[f64], x0: u64, terms: (f64, f64, f64, f64)| {
        b.set(CH_MEAN, sx / n);
        b.set(CH_SECOND, sx2 / n);
        b.set(CH_X0, x0 as f64);
        b.set(CH_X0_SQ, (x0 as f64).powi(2));
        b.set(CH_R0, terms.0);
        b.set(CH_MT_LHS, terms.1);
        b.set(CH_MT_RHS, terms.2);
        for (k, s) in lags.iter().enumerate() {
            b.set(CH_LAG0 + k, s / n);
        }
    };
    let mut terms = origin_terms(&system);
    set_levels(&mut batcher, sum_x, sum_x2, &lag_sums, system.raw_counts()[o], terms);

    let end = opts.burn_in + opts.horizon;
    for event in driving.feed(lattice.sites(), opts.burn_in, end)? {
        let p = event.site;
        let old = system.raw_counts()[p] as f64;
        let delta = match system.apply_event(&event)? {
            Outcome::Arrived => 1.0,
            Outcome::Departed => -1.0,
            _ => continue,
        };
        batcher.advance_to(event.time);
        sum_x += delta;
        sum_x2 += 2.0 * delta * old + 1.0;
        let c = system.raw_counts();
        for (k, (fwd, back)) in lag_tables.iter().enumerate() {
            if opts.lags[k] == 0 {
                lag_sums[k] += 2.0 * delta * old + 1.0;
            } else {
                lag_sums[k] += delta * (c[fwd[p]] as f64 + c[back[p]] as f64);
            }
        }
        if p == o && delta < 0.0 {
            batcher.impulse(CH_DEP0, 1.0);
        }
        if near[p] {
            let fresh = origin_terms(&system);
            let jump = fresh.3 - terms.3;
            if jump > 0.0 {
                batcher.impulse(CH_I_UP, jump);
            } else if jump < 0.0 {
                batcher.impulse(CH_I_DOWN, -jump);
            }
            terms = fresh;
        }
        set_levels(&mut batcher, sum_x, sum_x2, &lag_sums, system.raw_counts()[o], terms);
    }
    let batch_len = batcher.batch_len();
    Ok(BatchTable {
        seed: driving.seed(),
        batch_len,
        rows: batcher.finish(),
        lags: opts.lags.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariancePoint {
    pub lag: u32,
    /// Centred at the closed-form mean (falls back to the sample mean when
    /// no closed form exists).
    pub estimate: Estimate,
    /// Centred at the pooled sample mean.
    pub empirical: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// Accepted departures at the origin per unit time.
    pub departure_rate_origin: Estimate,
    /// Time average of the departure probability at the origin.
    pub mean_rate_origin: Estimate,
    /// Up-jumps minus down-jumps of `x_0 * sum_j a_j x_j` per unit time.
    pub drift_residual: Estimate,
    pub mass_transport_lhs: Estimate,
    pub mass_transport_rhs: Estimate,
    pub mass_transport_residual: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub seeds: Vec<u64>,
    pub burn_in: f64,
    pub horizon: f64,
    pub batches_per_seed: usize,
    pub batch_len: f64,
    pub closed_form_mean: Option<f64>,
    pub divergent: bool,
    /// Site-averaged.
    pub mean: Estimate,
    pub mean_origin: Estimate,
    /// Site-averaged.
    pub second_moment: Estimate,
    pub second_moment_origin: Estimate,
    pub covariance: Vec<CovariancePoint>,
    /// Present when the run tracked the rate-balance terms.
    pub balance: Option<BalanceReport>,
}

impl StatReport {
    /// Pools the batches of several replicas.
    pub fn from_tables(tables: &[BatchTable], closed_form_mean: Option<f64>, opts: &ErgodicOptions) -> Result<Self, StationaryError> {
        let rows: Vec<Vec<f64>> = tables.iter().flat_map(|t| t.rows.iter().cloned()).collect();
        let est = |ch: usize| Estimate::from_batches(&column(&rows, ch));
        let mean = est(CH_MEAN)?;
        let centre = closed_form_mean.unwrap_or(mean.mean);
        let mut covariance = Vec::new();
        for (k, &lag) in opts.lags.iter().enumerate() {
            let ch = CH_LAG0 + k;
            let closed: Vec<f64> = rows.iter().map(|r| r[ch] - 2.0 * centre * r[CH_MEAN] + centre * centre).collect();
            let empirical: Vec<f64> = rows.iter().map(|r| r[ch] - mean.mean * mean.mean).collect();
            covariance.push(CovariancePoint {
                lag,
                estimate: Estimate::from_batches(&closed)?,
                empirical: Estimate::from_batches(&empirical)?,
            });
        }
        let drift: Vec<f64> = rows.iter().map(|r| r[CH_I_UP] - r[CH_I_DOWN]).collect();
        let mt: Vec<f64> = rows.iter().map(|r| r[CH_MT_LHS] - r[CH_MT_RHS]).collect();
        Ok(Self {
            seeds: tables.iter().map(|t| t.seed).collect(),
            burn_in: opts.burn_in,
            horizon: opts.horizon,
            batches_per_seed: opts.batches,
            batch_len: tables.first().map(|t| t.batch_len).unwrap_or(0.0),
            closed_form_mean,
            divergent: false,
            mean,
            mean_origin: est(CH_X0)?,
            second_moment: est(CH_SECOND)?,
            second_moment_origin: est(CH_X0_SQ)?,
            covariance,
            balance: if opts.balance {
                Some(BalanceReport {
                    departure_rate_origin: est(CH_DEP0)?,
                    mean_rate_origin: est(CH_R0)?,
                    drift_residual: Estimate::from_batches(&drift)?,
                    mass_transport_lhs: est(CH_MT_LHS)?,
                    mass_transport_rhs: est(CH_MT_RHS)?,
                    mass_transport_residual: Estimate::from_batches(&mt)?,
                })
            } else {
                None
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Covariance curve as CSV with a header row.
    pub fn covariance_csv(&self) -> String {
        let mut out = String::from("lag,estimate,half_width,empirical,empirical_half_width\n");
        for c in &self.covariance {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.lag, c.estimate.mean, c.estimate.half_width, c.empirical.mean, c.empirical.half_width
            );
        }
        out
    }
}

/// Pooled ergodic estimates over one replica per seed.
pub fn ergodic_estimates(
    config: &DynamicsConfig,
    initial: &InitialCondition,
    lambda: f64,
    seeds: &[u64],
    opts: &ErgodicOptions,
) -> Result<StatReport, StationaryError> {
    if seeds.is_empty() {
        return Err(StationaryError::InvalidParameter("no seeds"));
    }
    let mut tables = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let driving = DrivingStream::new(seed, lambda)?;
        tables.push(ergodic_batches(config, initial, &driving, opts)?);
    }
    let closed = config.seq.closed_form_mean(lambda).ok();
    let mut report = StatReport::from_tables(&tables, closed, opts)?;
    report.divergent = closed.is_none();
    Ok(report)
}

/// The rate-conservation part of [`ergodic_estimates`] from empty starts.
pub fn rate_balance_check(
    config: &DynamicsConfig,
    lambda: f64,
    seeds: &[u64],
    burn_in: f64,
    horizon: f64,
) -> Result<BalanceReport, StationaryError> {
    let opts = ErgodicOptions {
        burn_in,
        horizon,
        ..ErgodicOptions::default()
    };
    let report = ergodic_estimates(config, &InitialCondition::Zero, lambda, seeds, &opts)?;
    Ok(report.balance.expect("balance tracking is on"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::InterferenceSequence;

    fn torus(n: u32) -> DynamicsConfig {
        DynamicsConfig::new(InterferenceSequence::ones(1, 1), Region::Torus { n })
    }

    #[test]
    fn loynes_at_zero_rate_is_zero() {
        let d = DrivingStream::new(1, 0.0).unwrap();
        let s = loynes_sample(&torus(10), &[Site::origin(1)], 16.0, 3, &d).unwrap();
        assert_eq!(s.values[0], vec![0, 0, 0, 0]);
        assert_eq!(s.converged_at[0], Some(64.0));
        assert!(s.require_converged().is_ok());
    }

    #[test]
    fn loynes_is_monotone_in_depth() {
        for seed in 0..5 {
            let d = DrivingStream::new(seed, 0.25).unwrap();
            let sites: Vec<Site> = (-3..=3).map(|k| Site::new(vec![k])).collect();
            let s = loynes_sample(&torus(50), &sites, 16.0, 6, &d).unwrap();
            assert!(s.is_monotone(), "seed {seed}: {:?}", s.values);
        }
    }

    #[test]
    fn loynes_supercritical_keeps_growing() {
        let d = DrivingStream::new(2, 0.5).unwrap();
        let s = loynes_sample(&torus(20), &[Site::origin(1)], 16.0, 6, &d).unwrap();
        assert!(s.is_monotone());
        let v = &s.values[0];
        assert!(v.last().unwrap() > &v[0]);
        assert!(matches!(s.require_converged(), Err(StationaryError::NotConverged { .. })));
    }

    #[test]
    fn zero_rate_estimates_vanish() {
        let opts = ErgodicOptions {
            burn_in: 0.0,
            horizon: 300.0,
            batches: 20,
            lags: vec![0, 1, 2],
            balance: true,
        };
        let r = ergodic_estimates(&torus(5), &InitialCondition::Zero, 0.0, &[1], &opts).unwrap();
        assert_eq!(r.mean.mean, 0.0);
        assert!(r.covariance.iter().all(|c| c.estimate.mean == 0.0));
        assert_eq!(r.balance.unwrap().departure_rate_origin.mean, 0.0);
    }

    /// Incremental sums agree with brute-force recomputation: a single
    /// batch covering a short run, compared with probes at every event.
    #[test]
    fn incremental_lag_sums_match_direct() {
        let cfg = torus(4);
        let d = DrivingStream::new(9, 0.3).unwrap();
        let opts = ErgodicOptions {
            burn_in: 0.0,
            horizon: 40.0,
            batches: 1,
            lags: vec![0, 1, 3],
            balance: true,
        };
        let table = ergodic_batches(&cfg, &InitialCondition::Constant { value: 2 }, &d, &opts).unwrap();
        // brute force: step through events and integrate directly
        let mut sys = System::new(&cfg, &InitialCondition::Constant { value: 2 }, 0.0).unwrap();
        let lat = sys.lattice().clone();
        let m = lat.len();
        let mut acc = [0.0f64; 4];
        let mut t = 0.0;
        let integrate = |sys: &System, acc: &mut [f64; 4], dt: f64| {
            let c = sys.raw_counts();
            acc[0] += dt * c.iter().map(|&v| v as f64).sum::<f64>() / m as f64;
            for (slot, k) in [(1usize, 0usize), (2, 1), (3, 3)] {
                let s: f64 = (0..m).map(|p| c[p] as f64 * c[(p + k) % m] as f64).sum();
                acc[slot] += dt * s / m as f64;
            }
        };
        for e in d.feed(lat.sites(), 0.0, 40.0).unwrap() {
            integrate(&sys, &mut acc, e.time - t);
            t = e.time;
            sys.apply_event(&e).unwrap();
        }
        integrate(&sys, &mut acc, 40.0 - t);
        let row = &table.rows[0];
        assert!((row[CH_MEAN] - acc[0] / 40.0).abs() < 1e-9);
        for (k, slot) in [1usize, 2, 3].iter().enumerate() {
            assert!((row[CH_LAG0 + k] - acc[*slot] / 40.0).abs() < 1e-9, "lag slot {slot}");
        }
    }

    #[test]
    fn short_run_is_near_formula() {
        let opts = ErgodicOptions {
            burn_in: 500.0,
            horizon: 6000.0,
            batches: 20,
            lags: vec![],
            balance: true,
        };
        let r = ergodic_estimates(&torus(20), &InitialCondition::Zero, 0.25, &[3], &opts).unwrap();
        assert!((r.mean.mean - 1.0).abs() < 0.15, "{:?}", r.mean);
        assert!((r.balance.as_ref().unwrap().departure_rate_origin.mean - 0.25).abs() < 0.05);
        assert!(r.to_json().contains("\"mean\""));
    }

    #[test]
    fn rejects_non_torus() {
        let cfg = DynamicsConfig::new(InterferenceSequence::ones(1, 1), Region::Box { n: 3 });
        let d = DrivingStream::new(1, 0.1).unwrap();
        assert_eq!(
            ergodic_batches(&cfg, &InitialCondition::Zero, &d, &ErgodicOptions::default()),
            Err(StationaryError::NotTorus)
        );
    }
}
