//! Config-driven experiment runners and their reports.

pub mod config;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};

use crate::construction::{block_length, dependency_schedule, evaluate_on, ConstructionError};
use crate::driving::{DrivingError, DrivingStream};
use crate::dynamics::{
    coupled_run, run, Count, DynamicsConfig, DynamicsError, InitialCondition, Outcome, OrderingSpec, ProbeSpec, Suppression,
    System,
};
use crate::fluid::{check_supercritical, integrate, resolution_floor, sup_distance, FluidError, FluidState, Trajectory};
use crate::interference::InterferenceSequence;
use crate::lattice::{Region, Site};
use crate::stationary::{ergodic_batches, loynes_sample, BatchTable, ErgodicOptions, StatReport, StationaryError};
use crate::stats::{median, ols};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Driving(#[from] DrivingError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

/// One pass/fail statement derived from recorded data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    /// Replica to replay when the verdict fails.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<String>,
}

impl Verdict {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
            seed: None,
            replay: None,
        }
    }

    fn blame(mut self, seed: Option<u64>) -> Self {
        if !self.pass {
            self.seed = seed;
        }
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub verdicts: Vec<Verdict>,
    pub results: Value,
    /// Not serialised, so that reports are byte-identical across runs.
    #[serde(skip)]
    pub wall_clock: f64,
    /// `(file name, contents)` pairs written next to `report.json`.
    #[serde(skip)]
    pub artifacts: Vec<(String, String)>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// One line per verdict.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let _ = writeln!(out, "{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
            if let Some(cmd) = &v.replay {
                let _ = writeln!(out, "     replay: {cmd}");
            }
        }
        out
    }

    /// Writes `report.json` and the CSV artifacts into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ExperimentError> {
        let fail = |p: &Path, e: std::io::Error| ExperimentError::Output {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| fail(dir, e))?;
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()).map_err(|e| fail(&path, e))?;
        for (name, contents) in &self.artifacts {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| fail(&path, e))?;
        }
        Ok(())
    }
}

struct Outputs {
    verdicts: Vec<Verdict>,
    results: Value,
    artifacts: Vec<(String, String)>,
}

/// Runs the configured experiment. Files are not written; see
/// [`ExperimentReport::write_to`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.check()?;
    let started = Instant::now();
    let seq = cfg.sequence()?;
    let out = match cfg.kind {
        ExperimentKind::MeanVsFormula => mean_vs_formula(cfg, &seq)?,
        ExperimentKind::CovarianceFigure => covariance_figure(cfg, &seq)?,
        ExperimentKind::MomentBounds => moment_bounds(cfg, &seq)?,
        ExperimentKind::CouplingSuite => coupling_suite(cfg, &seq)?,
        ExperimentKind::Loynes => loynes(cfg, &seq)?,
        ExperimentKind::LocalVsBox => local_vs_box(cfg, &seq)?,
        ExperimentKind::FrozenWall => frozen_wall(cfg, &seq)?,
        ExperimentKind::BoundedStartConvergence => bounded_start(cfg, &seq)?,
        ExperimentKind::SupercriticalGrowth => supercritical_growth(cfg, &seq)?,
        ExperimentKind::FluidTransience => fluid_transience(cfg, &seq)?,
        ExperimentKind::InfiniteSupport => infinite_support(cfg, &seq)?,
    };
    let source = cfg
        .source
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "<config>".to_string());
    let verdicts = out
        .verdicts
        .into_iter()
        .map(|mut v| {
            if !v.pass {
                let seed = *v.seed.get_or_insert(cfg.seeds[0]);
                v.replay = Some(format!("iqnet run {source} --seed {seed}"));
            }
            v
        })
        .collect();
    Ok(ExperimentReport {
        kind: cfg.kind,
        config: cfg.clone(),
        verdicts,
        results: out.results,
        wall_clock: started.elapsed().as_secs_f64(),
        artifacts: out.artifacts,
    })
}

fn stream(cfg: &ExperimentConfig, seed: u64) -> Result<DrivingStream, DrivingError> {
    DrivingStream::new(seed, cfg.lambda)
}

/// Maps `f` over `seeds` on scoped worker threads. Results keep seed order,
/// so merged reports do not depend on scheduling.
pub fn par_seeds<T: Send, E: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T, E> + Sync) -> Result<Vec<T>, E> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    if workers <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let chunk = seeds.len().div_ceil(workers);
    let f = &f;
    let parts: Vec<Vec<Result<T, E>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&s| f(s)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    parts.into_iter().flatten().collect()
}

/// Per-replica batch tables plus the pooled report.
pub fn pooled_estimates(
    config: &DynamicsConfig,
    initial: &InitialCondition,
    lambda: f64,
    seeds: &[u64],
    opts: &ErgodicOptions,
) -> Result<(Vec<BatchTable>, StatReport), StationaryError> {
    let tables = par_seeds(seeds, |seed| ergodic_batches(config, initial, &DrivingStream::new(seed, lambda)?, opts))?;
    let closed = config.seq.closed_form_mean(lambda).ok();
    let mut report = StatReport::from_tables(&tables, closed, opts)?;
    report.divergent = closed.is_none();
    Ok((tables, report))
}

/// Seed whose replica mean lies furthest from `target`.
fn worst_seed(tables: &[BatchTable], target: f64) -> Option<u64> {
    tables
        .iter()
        .max_by(|a, b| (a.mean() - target).abs().total_cmp(&(b.mean() - target).abs()))
        .map(|t| t.seed)
}

fn per_seed_csv(tables: &[BatchTable]) -> String {
    let mut out = String::from("seed,mean\n");
    for t in tables {
        let _ = writeln!(out, "{},{}", t.seed, t.mean());
    }
    out
}

fn fmt_est(e: &crate::stats::Estimate) -> String {
    format!("{:.5} ± {:.5}", e.mean, e.half_width)
}

fn mean_vs_formula(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.mean_vs_formula.clone().expect("filled");
    let dc = DynamicsConfig::new(seq.clone(), Region::Torus { n: p.n });
    let opts = ErgodicOptions {
        burn_in: p.burn_in,
        horizon: p.horizon,
        batches: p.batches,
        lags: p.lags.clone(),
        balance: true,
    };
    let (tables, report) = pooled_estimates(&dc, &p.initial, cfg.lambda, &cfg.seeds, &opts)?;
    let mu = seq.closed_form_mean(cfg.lambda).expect("checked subcritical");
    let mut verdicts = mean_verdicts(&report, &tables, mu, p.tolerance);
    let balance = report.balance.as_ref().expect("balance on");
    let rate = balance.departure_rate_origin.mean;
    verdicts.push(Verdict::new(
        "departure-rate",
        (rate - cfg.lambda).abs() <= p.rate_tolerance * cfg.lambda,
        format!("accepted departures at origin per unit time {rate:.5} vs lambda {} (±{:.0}%)", cfg.lambda, 100.0 * p.rate_tolerance),
    ));
    let mt = &balance.mass_transport_residual;
    verdicts.push(Verdict::new(
        "mass-transport",
        mt.within(0.0, p.sd_multiplier),
        format!("residual {} within {} half-widths of 0", fmt_est(mt), p.sd_multiplier),
    ));
    let drift = &balance.drift_residual;
    verdicts.push(Verdict::new(
        "interference-drift",
        drift.within(0.0, p.sd_multiplier),
        format!("residual {} within {} half-widths of 0", fmt_est(drift), p.sd_multiplier),
    ));
    let mut artifacts = vec![("per_seed.csv".to_string(), per_seed_csv(&tables))];
    if !p.lags.is_empty() {
        artifacts.push(("covariance.csv".to_string(), report.covariance_csv()));
    }
    Ok(Outputs {
        verdicts,
        results: json!({ "closed_form_mean": mu, "report": report }),
        artifacts,
    })
}

pub fn mean_verdicts(report: &StatReport, tables: &[BatchTable], target: f64, tolerance: f64) -> Vec<Verdict> {
    let m = report.mean.mean;
    let pass = (m - target).abs() <= tolerance * target.max(f64::MIN_POSITIVE) || (target == 0.0 && m == 0.0);
    vec![Verdict::new(
        "mean",
        pass,
        format!("pooled site-averaged mean {} vs {target:.5} (±{:.0}%)", fmt_est(&report.mean), 100.0 * tolerance),
    )
    .blame(worst_seed(tables, target))]
}

fn covariance_figure(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.covariance_figure.clone().expect("filled");
    let dc = DynamicsConfig::new(seq.clone(), Region::Torus { n: p.n });
    let opts = ErgodicOptions {
        burn_in: p.burn_in,
        horizon: p.horizon,
        batches: p.batches,
        lags: (0..=p.max_lag).collect(),
        balance: false,
    };
    let (tables, report) = pooled_estimates(&dc, &p.initial, cfg.lambda, &cfg.seeds, &opts)?;
    let target = p.target_mean.unwrap_or_else(|| seq.closed_form_mean(cfg.lambda).expect("checked"));
    let mut verdicts = mean_verdicts(&report, &tables, target, p.tolerance);
    verdicts.extend(covariance_verdicts(&report, p.sd_multiplier));
    Ok(Outputs {
        verdicts,
        results: json!({ "target_mean": target, "report": report }),
        artifacts: vec![
            ("covariance.csv".to_string(), report.covariance_csv()),
            ("per_seed.csv".to_string(), per_seed_csv(&tables)),
        ],
    })
}

/// Positivity at lag 0, no significantly negative lag, decay from 0 to 10.
pub fn covariance_verdicts(report: &StatReport, k: f64) -> Vec<Verdict> {
    let cov = &report.covariance;
    let mut out = Vec::new();
    if let Some(c0) = cov.iter().find(|c| c.lag == 0) {
        out.push(Verdict::new(
            "covariance-lag0-positive",
            c0.estimate.mean > 0.0,
            format!("lag 0 {}", fmt_est(&c0.estimate)),
        ));
    }
    let worst = cov
        .iter()
        .map(|c| (c.lag, c.estimate.mean + k * c.estimate.half_width))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((lag, upper)) = worst {
        out.push(Verdict::new(
            "covariance-nonnegative",
            upper >= 0.0,
            format!("smallest estimate + {k} half-widths is {upper:.4} at lag {lag}"),
        ));
    }
    if let (Some(c0), Some(c10)) = (cov.iter().find(|c| c.lag == 0), cov.iter().find(|c| c.lag == 10)) {
        out.push(Verdict::new(
            "covariance-decay",
            c0.estimate.mean > c10.estimate.mean,
            format!("lag 0 {:.4} > lag 10 {:.4}", c0.estimate.mean, c10.estimate.mean),
        ));
    }
    out
}

/// Counts events at which a queue that held at least `shift` customers
/// dropped below `shift`.
pub fn floor_audit(config: &DynamicsConfig, initial: &InitialCondition, driving: &DrivingStream, t1: f64) -> Result<(u64, u64), DynamicsError> {
    let mut system = System::new(config, initial, 0.0)?;
    let lattice = Arc::clone(system.lattice());
    let k = config.shift;
    let (mut events, mut violations) = (0u64, 0u64);
    for event in driving.feed(lattice.sites(), 0.0, t1)? {
        let before = system.raw_counts()[event.site];
        system.apply_event(&event)?;
        events += 1;
        if before >= k && system.raw_counts()[event.site] < k {
            violations += 1;
        }
    }
    Ok((events, violations))
}

fn moment_bounds(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.moment_bounds.clone().expect("filled");
    let lambda = cfg.lambda;
    let opts = ErgodicOptions {
        burn_in: p.burn_in,
        horizon: p.horizon,
        batches: p.batches,
        lags: Vec::new(),
        balance: false,
    };
    let plain = DynamicsConfig::new(seq.clone(), Region::Torus { n: p.n });
    let bound = seq.second_moment_bound(lambda).expect("checked");
    let (tables, report) = pooled_estimates(&plain, &InitialCondition::Zero, lambda, &cfg.seeds, &opts)?;
    let m2 = &report.second_moment;
    let mut verdicts = vec![Verdict::new(
        "second-moment",
        m2.mean <= bound.bound + p.sd_multiplier * m2.half_width,
        format!("E[x^2] {} <= bound {:.5} + {} half-widths", fmt_est(m2), bound.bound, p.sd_multiplier),
    )
    .blame(tables.iter().max_by(|a, b| a.second_moment().total_cmp(&b.second_moment())).map(|t| t.seed))];

    let shifted = plain.clone().with_shift(p.shift);
    let k_bound = seq.k_shifted_mean_bound(lambda, p.shift).expect("checked");
    let (k_tables, k_report) = pooled_estimates(&shifted, &InitialCondition::Constant { value: p.shift }, lambda, &cfg.seeds, &opts)?;
    verdicts.push(
        Verdict::new(
            "k-shifted-mean",
            k_report.mean.mean <= k_bound + p.sd_multiplier * k_report.mean.half_width,
            format!("K={} mean {} <= {k_bound:.5} + {} half-widths", p.shift, fmt_est(&k_report.mean), p.sd_multiplier),
        )
        .blame(worst_seed(&k_tables, k_bound)),
    );
    let audit_initial = InitialCondition::Iid {
        law: crate::dynamics::IidLaw::Poisson { mean: p.shift as f64 },
        seed: 17,
    };
    let mut floor_rows = Vec::new();
    let mut offending = None;
    let (mut events, mut violations) = (0, 0);
    for &seed in &cfg.seeds {
        let (e, v) = floor_audit(&shifted, &audit_initial, &stream(cfg, seed)?, p.floor_horizon)?;
        events += e;
        violations += v;
        if v > 0 && offending.is_none() {
            offending = Some(seed);
        }
        floor_rows.push(json!({ "seed": seed, "events": e, "violations": v }));
    }
    verdicts.push(
        Verdict::new(
            "k-shifted-floor",
            violations == 0,
            format!("{violations} floor violations over {events} events"),
        )
        .blame(offending),
    );
    Ok(Outputs {
        verdicts,
        results: json!({
            "second_moment_bound": bound,
            "k_shifted_mean_bound": k_bound,
            "report": report,
            "k_shifted_report": k_report,
            "floor_audit": floor_rows,
        }),
        artifacts: vec![("per_seed.csv".to_string(), per_seed_csv(&tables))],
    })
}

/// Outcome of the three couplings for one seed.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingRow {
    pub seed: u64,
    pub name: &'static str,
    pub events: u64,
    pub violations: usize,
    pub first: Option<String>,
}

pub fn coupling_checks(seq: &InterferenceSequence, p: &config::CouplingParams, driving: &DrivingStream) -> Result<Vec<CouplingRow>, DynamicsError> {
    let torus = DynamicsConfig::new(seq.clone(), Region::Torus { n: p.n });
    let boxed = DynamicsConfig::new(seq.clone(), Region::Box { n: p.n });
    let dim = seq.dim();
    let suppressed = torus.clone().with_suppression(Suppression {
        sites: Site::ball(&Site::origin(dim), p.suppress_radius),
        window: Some((p.suppress_window[0], p.suppress_window[1])),
    });
    let zero = InitialCondition::Zero;
    let cases: [(&'static str, Vec<System>); 3] = [
        (
            "ordered-initials",
            vec![
                System::new(&torus, &zero, 0.0)?,
                System::new(&torus, &InitialCondition::Constant { value: p.upper_value }, 0.0)?,
            ],
        ),
        (
            "arrival-suppression",
            vec![System::new(&torus, &zero, 0.0)?, System::new(&suppressed, &zero, 0.0)?],
        ),
        ("box-below-torus", vec![System::new(&torus, &zero, 0.0)?, System::new(&boxed, &zero, 0.0)?]),
    ];
    let mut rows = Vec::new();
    for (name, systems) in cases {
        // system 1 must stay below system 0, except for ordered initials
        let order = if name == "ordered-initials" {
            OrderingSpec { lower: 0, upper: 1 }
        } else {
            OrderingSpec { lower: 1, upper: 0 }
        };
        let out = coupled_run(systems, &[order], driving, 0.0, p.horizon, false)?;
        rows.push(CouplingRow {
            seed: driving.seed(),
            name,
            events: out.report.events_checked,
            violations: out.report.violations.len(),
            first: out.report.violations.first().map(|v| v.to_string()),
        });
    }
    Ok(rows)
}

fn coupling_suite(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.coupling_suite.clone().expect("filled");
    let rows: Vec<CouplingRow> = par_seeds(&cfg.seeds, |seed| -> Result<_, ExperimentError> {
        Ok(coupling_checks(seq, &p, &stream(cfg, seed)?)?)
    })?
    .into_iter()
    .flatten()
    .collect();
    Ok(Outputs {
        verdicts: coupling_verdicts(&rows, p.min_events),
        results: json!({ "rows": rows }),
        artifacts: Vec::new(),
    })
}

pub fn coupling_verdicts(rows: &[CouplingRow], min_events: u64) -> Vec<Verdict> {
    ["ordered-initials", "arrival-suppression", "box-below-torus"]
        .iter()
        .map(|&name| {
            let mine: Vec<&CouplingRow> = rows.iter().filter(|r| r.name == name).collect();
            let violations: usize = mine.iter().map(|r| r.violations).sum();
            let fewest = mine.iter().map(|r| r.events).min().unwrap_or(0);
            let offending = mine.iter().find(|r| r.violations > 0 || r.events < min_events).map(|r| r.seed);
            Verdict::new(
                name,
                violations == 0 && fewest >= min_events,
                format!("{violations} violations over {} seeds, fewest events per seed {fewest}", mine.len()),
            )
            .blame(offending)
        })
        .collect()
}

/// Loynes audit for one seed: torus sequence plus box sequences.
#[derive(Debug, Clone, Serialize)]
pub struct LoynesRow {
    pub seed: u64,
    pub depths: Vec<f64>,
    pub torus: Vec<u64>,
    pub converged_at: Option<f64>,
    /// `(n, values by depth)`.
    pub boxes: Vec<(u32, Vec<u64>)>,
}

impl LoynesRow {
    pub fn depth_monotone(&self) -> bool {
        let mono = |v: &[u64]| v.windows(2).all(|w| w[0] <= w[1]);
        mono(&self.torus) && self.boxes.iter().all(|(_, v)| mono(v))
    }

    pub fn box_monotone(&self) -> bool {
        self.boxes
            .windows(2)
            .all(|w| w[0].1.iter().zip(&w[1].1).all(|(a, b)| a <= b))
    }
}

pub fn loynes_row(seq: &InterferenceSequence, p: &config::LoynesParams, driving: &DrivingStream) -> Result<LoynesRow, StationaryError> {
    let origin = [Site::origin(seq.dim())];
    let torus = loynes_sample(&DynamicsConfig::new(seq.clone(), Region::Torus { n: p.n }), &origin, p.t0, p.max_doublings, driving)?;
    let mut boxes = Vec::new();
    for &n in &p.boxes {
        let s = loynes_sample(&DynamicsConfig::new(seq.clone(), Region::Box { n }), &origin, p.t0, p.max_doublings, driving)?;
        boxes.push((n, s.values[0].clone()));
    }
    Ok(LoynesRow {
        seed: driving.seed(),
        depths: torus.depths.clone(),
        torus: torus.values[0].clone(),
        converged_at: torus.converged_at[0],
        boxes,
    })
}

pub fn loynes_verdicts(rows: &[LoynesRow], min_converged: f64) -> Vec<Verdict> {
    let first_bad = |f: &dyn Fn(&LoynesRow) -> bool| rows.iter().find(|r| !f(r)).map(|r| r.seed);
    let converged = rows.iter().filter(|r| r.converged_at.is_some()).count();
    let fraction = converged as f64 / rows.len().max(1) as f64;
    let depth_bad = first_bad(&|r| r.depth_monotone());
    let box_bad = first_bad(&|r| r.box_monotone());
    vec![
        Verdict::new(
            "depth-monotone",
            depth_bad.is_none(),
            format!("{} of {} seeds nondecreasing in past depth", rows.iter().filter(|r| r.depth_monotone()).count(), rows.len()),
        )
        .blame(depth_bad),
        Verdict::new(
            "box-monotone",
            box_bad.is_none(),
            format!("{} of {} seeds nondecreasing in box size", rows.iter().filter(|r| r.box_monotone()).count(), rows.len()),
        )
        .blame(box_bad),
        Verdict::new(
            "converged-fraction",
            fraction >= min_converged,
            format!("origin converged for {converged} of {} seeds ({:.1}%, need {:.0}%)", rows.len(), 100.0 * fraction, 100.0 * min_converged),
        )
        .blame(rows.iter().find(|r| r.converged_at.is_none()).map(|r| r.seed)),
    ]
}

fn loynes(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.loynes.clone().expect("filled");
    let rows = par_seeds(&cfg.seeds, |seed| -> Result<_, ExperimentError> { Ok(loynes_row(seq, &p, &stream(cfg, seed)?)?) })?;
    let mut csv = String::from("seed,mode,n,depth,value\n");
    for row in &rows {
        let seed = row.seed;
        for (k, d) in row.depths.iter().enumerate() {
            let _ = writeln!(csv, "{seed},torus,{},{d},{}", p.n, row.torus[k]);
            for (n, v) in &row.boxes {
                let _ = writeln!(csv, "{seed},box,{n},{d},{}", v[k]);
            }
        }
    }
    Ok(Outputs {
        verdicts: loynes_verdicts(&rows, p.min_converged),
        results: json!({ "rows": rows }),
        artifacts: vec![("loynes.csv".to_string(), csv)],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalRow {
    pub seed: u64,
    pub local: u64,
    pub oracle: u64,
    pub blocks: usize,
    pub largest_set: usize,
    pub reach: u32,
}

/// Local construction at the origin against a box run large enough to
/// contain the dependency set plus a margin.
pub fn local_row(
    seq: &InterferenceSequence,
    p: &config::LocalParams,
    initial: &InitialCondition,
    driving: &DrivingStream,
) -> Result<LocalRow, ExperimentError> {
    let mut params = block_length(driving.arrival_rate(), seq.radius(), seq.dim(), p.safety)?;
    params.cluster_cap = p.cluster_cap;
    let origin = Site::origin(seq.dim());
    let schedule = dependency_schedule(driving, &origin, 0.0, p.horizon, &params)?;
    let local = evaluate_on(driving, seq, 0, &schedule, initial)?;
    let n = schedule.reach() + seq.radius() + p.margin;
    let big = DynamicsConfig::new(seq.clone(), Region::Box { n });
    let out = run(&big, initial, driving, 0.0, p.horizon, &ProbeSpec::default())?;
    Ok(LocalRow {
        seed: driving.seed(),
        local,
        oracle: out.system.count(&origin).and_then(Count::finite).unwrap_or(0),
        blocks: schedule.blocks(),
        largest_set: schedule.sets.first().map(Vec::len).unwrap_or(0),
        reach: schedule.reach(),
    })
}

fn local_vs_box(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.local_vs_box.clone().expect("filled");
    let rows = par_seeds(&cfg.seeds, |seed| local_row(seq, &p, &InitialCondition::Zero, &stream(cfg, seed)?))?;
    let mut csv = String::from("seed,local,oracle,blocks,largest_set,reach\n");
    for row in &rows {
        let _ = writeln!(csv, "{},{},{},{},{},{}", row.seed, row.local, row.oracle, row.blocks, row.largest_set, row.reach);
    }
    let mismatch = rows.iter().find(|r| r.local != r.oracle).map(|r| r.seed);
    let agree = rows.iter().filter(|r| r.local == r.oracle).count();
    Ok(Outputs {
        verdicts: vec![Verdict::new("oracle-equality", mismatch.is_none(), format!("{agree} of {} seeds equal", rows.len())).blame(mismatch)],
        results: json!({ "rows": rows }),
        artifacts: vec![("local.csv".to_string(), csv)],
    })
}

/// Per-seed frozen-wall observations.
#[derive(Debug, Clone, Serialize)]
pub struct FrozenRow {
    pub seed: u64,
    /// Sum over queues within the interference radius of a wall at `adjacent_time`.
    pub adjacent_total: u64,
    pub adjacent_queues: usize,
    /// `x_0` at each checkpoint.
    pub origin: Vec<u64>,
}

pub fn frozen_row(seq: &InterferenceSequence, p: &config::FrozenParams, driving: &DrivingStream) -> Result<FrozenRow, ExperimentError> {
    let wall = p.wall as i64;
    let magnitude = p.magnitude.count()?;
    let config = DynamicsConfig::new(seq.clone(), Region::Box { n: p.wall })
        .with_frozen(vec![(Site::new(vec![-wall]), magnitude), (Site::new(vec![wall]), magnitude)]);
    let reach = seq.radius() as i64;
    let adjacent: Vec<Site> = (-wall + 1..wall).filter(|i| i.abs() >= wall - reach).map(|i| Site::new(vec![i])).collect();
    let mut sites = vec![Site::origin(1)];
    sites.extend(adjacent.iter().cloned());
    let mut times = p.checkpoints.clone();
    times.push(p.adjacent_time);
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let out = run(&config, &InitialCondition::Zero, driving, 0.0, horizon, &ProbeSpec { sites, times: times.clone() })?;
    let at = |t: f64| out.probes.iter().find(|s| s.time == t).expect("probe recorded");
    let finite = |c: &Count| c.finite().unwrap_or(0);
    Ok(FrozenRow {
        seed: driving.seed(),
        adjacent_total: at(p.adjacent_time).counts[1..].iter().map(finite).sum(),
        adjacent_queues: adjacent.len(),
        origin: p.checkpoints.iter().map(|&t| finite(&at(t).counts[0])).collect(),
    })
}

pub fn frozen_verdicts(rows: &[FrozenRow], p: &config::FrozenParams, lambda: f64, exact_walls: bool) -> Vec<Verdict> {
    let mut out = Vec::new();
    if exact_walls {
        let total: u64 = rows.iter().map(|r| r.adjacent_total).sum();
        let queues: usize = rows.iter().map(|r| r.adjacent_queues).sum();
        let expected = queues as f64 * lambda * p.adjacent_time;
        let sd = expected.sqrt();
        out.push(Verdict::new(
            "wall-adjacent-poisson",
            (total as f64 - expected).abs() <= p.sd_multiplier * sd,
            format!(
                "pooled count {total} over {queues} queues vs Poisson mean {expected:.0} (sd {sd:.1}, z = {:.2})",
                (total as f64 - expected) / sd
            ),
        ));
    }
    let medians: Vec<f64> = (0..p.checkpoints.len())
        .map(|k| median(&rows.iter().map(|r| r.origin[k] as f64).collect::<Vec<_>>()))
        .collect();
    out.push(Verdict::new(
        "origin-median-increasing",
        medians.windows(2).all(|w| w[0] < w[1]),
        format!("median x_0 at t = {:?}: {:?}", p.checkpoints, medians),
    ));
    out
}

fn frozen_wall(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.frozen_wall.clone().expect("filled");
    let rows = par_seeds(&cfg.seeds, |seed| frozen_row(seq, &p, &stream(cfg, seed)?))?;
    let mut csv = String::from("seed,adjacent_total");
    for t in &p.checkpoints {
        let _ = write!(csv, ",x0_t{t}");
    }
    csv.push('\n');
    for row in &rows {
        let _ = write!(csv, "{},{}", row.seed, row.adjacent_total);
        for v in &row.origin {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    let exact = p.magnitude.count()? == Count::Infinite;
    Ok(Outputs {
        verdicts: frozen_verdicts(&rows, &p, cfg.lambda, exact),
        results: json!({ "rows": rows }),
        artifacts: vec![("frozen.csv".to_string(), csv)],
    })
}

/// Whether `[a - k hw_a, a + k hw_a]` and `[b - k hw_b, b + k hw_b]` meet.
pub fn intervals_overlap(a: &crate::stats::Estimate, b: &crate::stats::Estimate, k: f64) -> bool {
    (a.mean - b.mean).abs() <= k * (a.half_width + b.half_width)
}

fn bounded_start(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.bounded_start_convergence.clone().expect("filled");
    let dc = DynamicsConfig::new(seq.clone(), Region::Torus { n: p.n });
    let opts = ErgodicOptions {
        burn_in: p.burn_in,
        horizon: p.horizon,
        batches: p.batches,
        lags: Vec::new(),
        balance: false,
    };
    let (_, low) = pooled_estimates(&dc, &InitialCondition::Zero, cfg.lambda, &cfg.seeds, &opts)?;
    let (_, high) = pooled_estimates(&dc, &InitialCondition::Constant { value: p.high }, cfg.lambda, &cfg.seeds, &opts)?;
    Ok(Outputs {
        verdicts: vec![Verdict::new(
            "bounded-start-agreement",
            intervals_overlap(&low.mean, &high.mean, p.sd_multiplier),
            format!("all-0 {} vs all-{} {} ({} half-width intervals)", fmt_est(&low.mean), p.high, fmt_est(&high.mean), p.sd_multiplier),
        )],
        results: json!({ "zero_start": low, "high_start": high }),
        artifacts: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthRow {
    pub seed: u64,
    pub times: Vec<f64>,
    pub totals: Vec<u64>,
    pub slope: f64,
    pub t_statistic: f64,
}

pub fn growth_row(seq: &InterferenceSequence, p: &config::GrowthParams, driving: &DrivingStream) -> Result<GrowthRow, DynamicsError> {
    let config = DynamicsConfig::new(seq.clone(), Region::Torus { n: p.n });
    let mut system = System::new(&config, &InitialCondition::Zero, 0.0)?;
    let steps = (p.horizon / p.sample_every).round() as usize;
    let mut times = Vec::with_capacity(steps);
    let mut totals = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t = k as f64 * p.sample_every;
        system.advance(driving, t)?;
        times.push(t);
        totals.push(system.total_finite());
    }
    let y: Vec<f64> = totals.iter().map(|&v| v as f64).collect();
    let (_, slope, t_statistic) = ols(&times, &y);
    Ok(GrowthRow {
        seed: driving.seed(),
        times,
        totals,
        slope,
        t_statistic,
    })
}

pub fn growth_verdicts(rows: &[GrowthRow], min_t: f64) -> Vec<Verdict> {
    let bad = rows.iter().find(|r| !(r.slope > 0.0 && r.t_statistic > min_t)).map(|r| r.seed);
    let detail = rows
        .iter()
        .map(|r| format!("seed {}: slope {:.3}/time, t = {:.1}", r.seed, r.slope, r.t_statistic))
        .collect::<Vec<_>>()
        .join("; ");
    vec![Verdict::new("linear-growth", bad.is_none(), detail).blame(bad)]
}

fn supercritical_growth(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.supercritical_growth.clone().expect("filled");
    let rows = par_seeds(&cfg.seeds, |seed| -> Result<_, ExperimentError> { Ok(growth_row(seq, &p, &stream(cfg, seed)?)?) })?;
    let mut csv = String::from("seed,t,total\n");
    for row in &rows {
        for (t, v) in row.times.iter().zip(&row.totals) {
            let _ = writeln!(csv, "{},{t},{v}", row.seed);
        }
    }
    let summary: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "seed": r.seed, "slope": r.slope, "t_statistic": r.t_statistic, "final_total": r.totals.last() }))
        .collect();
    Ok(Outputs {
        verdicts: growth_verdicts(&rows, p.min_t_statistic),
        results: json!({ "rows": summary }),
        artifacts: vec![("growth.csv".to_string(), csv)],
    })
}

/// Results of the fluid suite.
#[derive(Debug, Clone, Serialize)]
pub struct FluidOutcome {
    pub supercritical: crate::fluid::FluidVerdict,
    pub supercritical_halving: f64,
    pub subcritical_mass_ratio: f64,
    /// First sample time at which some coordinate lies below the resolution
    /// floor of the coarser step. Near zero the vector field is not Lipschitz,
    /// so step-halving agreement is only meaningful before this time.
    pub subcritical_first_drain: Option<f64>,
    pub subcritical_halving_before_drain: f64,
    /// Whole-horizon gap, reported for reference.
    pub subcritical_halving_full: f64,
    /// `(z, mean sup-norm error)` of rescaled stochastic runs.
    pub scaling: Vec<(f64, f64)>,
    #[serde(skip)]
    pub trajectories: Vec<(String, Trajectory)>,
}

/// Sup-norm gap restricted to samples strictly before `until`.
fn sup_distance_before(a: &Trajectory, b: &Trajectory, until: f64) -> f64 {
    let cut = |t: &Trajectory| Trajectory {
        samples: t.samples.iter().filter(|s| s.t < until).cloned().collect(),
        ..t.clone()
    };
    sup_distance(&cut(a), &cut(b))
}

pub fn fluid_suite(
    seq: &InterferenceSequence,
    lambda: f64,
    p: &config::FluidParams,
    seeds: &[u64],
) -> Result<FluidOutcome, ExperimentError> {
    let start = FluidState::tent(p.n, p.peak);
    let sup = integrate(&start, lambda, seq, p.step, p.horizon, p.sample_every)?;
    let sup_half = integrate(&start, lambda, seq, p.step / 2.0, p.horizon, p.sample_every)?;
    let verdict = check_supercritical(&sup, seq, p.unimodality_slack, p.slope_tolerance)?;

    let sub = integrate(&start, p.subcritical_lambda, seq, p.step, p.subcritical_horizon, p.sample_every)?;
    let sub_half = integrate(&start, p.subcritical_lambda, seq, p.step / 2.0, p.subcritical_horizon, p.sample_every)?;
    let floor = resolution_floor(seq, p.subcritical_lambda, p.step);
    let first_drain = sub.samples.iter().find(|s| s.y.iter().any(|&v| v < floor)).map(|s| s.t);
    let sub_halving = sup_distance_before(&sub, &sub_half, first_drain.unwrap_or(f64::INFINITY));
    let ratio = sub.samples.last().map(|s| s.mass()).unwrap_or(0.0) / start.mass();

    let fluid = integrate(&start, lambda, seq, p.step, p.scaling_horizon, p.scaling_sample_every)?;
    let mut scaling = Vec::new();
    for &z in &p.scales {
        let mut errors = Vec::new();
        for &seed in seeds {
            errors.push(scaled_error(seq, lambda, z, &fluid, seed)?);
        }
        scaling.push((z, errors.iter().sum::<f64>() / errors.len() as f64));
    }
    Ok(FluidOutcome {
        supercritical: verdict,
        supercritical_halving: sup_distance(&sup, &sup_half),
        subcritical_mass_ratio: ratio,
        subcritical_first_drain: first_drain,
        subcritical_halving_before_drain: sub_halving,
        subcritical_halving_full: sup_distance(&sub, &sub_half),
        scaling,
        trajectories: vec![("supercritical".into(), sup), ("subcritical".into(), sub)],
    })
}

/// `max_t max_i |x_i(z t) / z - y_i(t)|` for a box run started at `z y(0)`.
fn scaled_error(seq: &InterferenceSequence, lambda: f64, z: f64, fluid: &Trajectory, seed: u64) -> Result<f64, ExperimentError> {
    let first = &fluid.samples[0];
    let n = first.n as i64;
    let values = (-n..=n)
        .map(|i| (Site::new(vec![i]), (z * first.at(i)).round() as u64))
        .collect();
    let config = DynamicsConfig::new(seq.clone(), Region::Box { n: first.n as u32 });
    let mut system = System::new(&config, &InitialCondition::Explicit { values }, 0.0)?;
    let driving = DrivingStream::new(seed, lambda)?;
    let mut worst: f64 = 0.0;
    for s in &fluid.samples {
        system.advance(&driving, z * s.t)?;
        for i in -n..=n {
            let x = system.count(&Site::new(vec![i])).and_then(Count::finite).unwrap_or(0) as f64;
            worst = worst.max((x / z - s.at(i)).abs());
        }
    }
    Ok(worst)
}

pub fn fluid_verdicts(o: &FluidOutcome, p: &config::FluidParams) -> Vec<Verdict> {
    let s = &o.supercritical;
    let mut v = vec![
        Verdict::new(
            "unimodality",
            s.unimodality_ok,
            format!("weakly unimodal within {:e} at every sample", p.unimodality_slack),
        ),
        Verdict::new("lyapunov-monotone", s.j_monotone, "J nondecreasing between samples".to_string()),
        Verdict::new(
            "lyapunov-slope",
            s.slope_bound_ok,
            format!("smallest slope minus bound {:.5} (tolerance {:e})", s.worst_slope_margin, p.slope_tolerance),
        ),
        Verdict::new(
            "subcritical-drain",
            o.subcritical_mass_ratio < p.drain_fraction,
            format!("mass ratio at t={} is {:.3e} (need < {:e})", p.subcritical_horizon, o.subcritical_mass_ratio, p.drain_fraction),
        ),
        Verdict::new(
            "step-halving",
            o.supercritical_halving <= p.halving_tolerance && o.subcritical_halving_before_drain <= p.halving_tolerance,
            format!(
                "supercritical {:.2e}, subcritical before resolution floor (t={:?}) {:.2e} (whole horizon {:.2e})",
                o.supercritical_halving, o.subcritical_first_drain, o.subcritical_halving_before_drain, o.subcritical_halving_full
            ),
        ),
    ];
    let decreasing = o.scaling.windows(2).all(|w| w[1].1 < w[0].1);
    v.push(Verdict::new("fluid-scaling", decreasing, format!("(z, error) = {:?}", o.scaling)));
    v
}

fn fluid_transience(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.fluid_transience.clone().expect("filled");
    let outcome = fluid_suite(seq, cfg.lambda, &p, &cfg.seeds)?;
    let artifacts = outcome
        .trajectories
        .iter()
        .map(|(name, t)| (format!("fluid_{name}.csv"), t.to_csv()))
        .collect();
    Ok(Outputs {
        verdicts: fluid_verdicts(&outcome, &p),
        results: json!({ "outcome": outcome }),
        artifacts,
    })
}

/// Times and values of `x_0` changes over `[0, horizon)` on a torus.
pub fn origin_changes(config: &DynamicsConfig, driving: &DrivingStream, horizon: f64) -> Result<Vec<(f64, u64)>, DynamicsError> {
    let mut system = System::new(config, &InitialCondition::Zero, 0.0)?;
    let lattice = Arc::clone(system.lattice());
    let o = lattice.position(&Site::origin(lattice.dim())).expect("origin present");
    let mut log = Vec::new();
    for event in driving.feed(lattice.sites(), 0.0, horizon)? {
        let outcome = system.apply_event(&event)?;
        if event.site == o && matches!(outcome, Outcome::Arrived | Outcome::Departed) {
            log.push((event.time, system.raw_counts()[o]));
        }
    }
    Ok(log)
}

fn infinite_support(cfg: &ExperimentConfig, seq: &InterferenceSequence) -> Result<Outputs, ExperimentError> {
    let p = cfg.infinite_support.clone().expect("filled");
    let largest = *p.radii.last().expect("checked");
    let truncations: Vec<InterferenceSequence> = p.radii.iter().map(|&r| seq.truncate(r)).collect();
    let mut identical = vec![0usize; p.radii.len()];
    let mut differing = Vec::new();
    let per_seed = par_seeds(&cfg.seeds, |seed| -> Result<_, ExperimentError> {
        let driving = stream(cfg, seed)?;
        let logs: Vec<Vec<(f64, u64)>> = truncations
            .iter()
            .map(|s| origin_changes(&DynamicsConfig::new(s.clone(), Region::Torus { n: p.n }), &driving, p.horizon))
            .collect::<Result<_, _>>()?;
        Ok((seed, logs))
    })?;
    for (seed, logs) in per_seed {
        let reference = logs.last().expect("nonempty");
        for (k, log) in logs.iter().enumerate() {
            if log == reference {
                identical[k] += 1;
            } else if k + 2 == logs.len() {
                differing.push(seed);
            }
        }
    }
    let mut verdicts = Vec::new();
    if p.radii.len() >= 2 {
        let k = p.radii.len() - 2;
        let fraction = identical[k] as f64 / cfg.seeds.len() as f64;
        verdicts.push(
            Verdict::new(
                "truncation-paths",
                fraction >= p.min_identical,
                format!(
                    "x_0 paths identical for radii {} and {largest} in {} of {} seeds ({:.0}%, need {:.0}%); differing seeds {:?}",
                    p.radii[k],
                    identical[k],
                    cfg.seeds.len(),
                    100.0 * fraction,
                    100.0 * p.min_identical,
                    differing
                ),
            )
            .blame(differing.first().copied()),
        );
    }
    let top = truncations.last().expect("nonempty");
    let dc = DynamicsConfig::new(top.clone(), Region::Torus { n: p.n });
    let opts = ErgodicOptions {
        burn_in: p.burn_in,
        horizon: p.ergodic_horizon,
        batches: p.batches,
        lags: Vec::new(),
        balance: false,
    };
    let seeds: Vec<u64> = cfg.seeds.iter().copied().take(p.ergodic_seeds.max(1)).collect();
    let (tables, report) = pooled_estimates(&dc, &InitialCondition::Zero, cfg.lambda, &seeds, &opts)?;
    let target = top.closed_form_mean(cfg.lambda).expect("checked");
    verdicts.extend(mean_verdicts(&report, &tables, target, p.tolerance));
    let per_radius: Vec<Value> = p
        .radii
        .iter()
        .zip(&identical)
        .map(|(r, c)| json!({ "radius": r, "identical_to_largest": c }))
        .collect();
    Ok(Outputs {
        verdicts,
        results: json!({ "paths": per_radius, "differing_seeds": differing, "closed_form_mean": target, "report": report }),
        artifacts: vec![("per_seed.csv".to_string(), per_seed_csv(&tables))],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: ExperimentKind, lambda: f64) -> ExperimentConfig {
        ExperimentConfig::new(kind, lambda, "ones(3)").with_seeds([1, 2])
    }

    #[test]
    fn quick_mean_run_reports_and_writes() {
        let mut cfg = quick(ExperimentKind::MeanVsFormula, 0.25);
        let p = cfg.mean_vs_formula.as_mut().unwrap();
        p.n = 10;
        p.burn_in = 200.0;
        p.horizon = 2000.0;
        p.batches = 20;
        p.tolerance = 0.5;
        p.rate_tolerance = 0.5;
        p.lags = vec![0, 1];
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.verdicts.len(), 4);
        assert!(r.verdicts[0].pass, "{}", r.summary());
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(r.to_json(), again.to_json());
        let dir = std::env::temp_dir().join(format!("iqnet-test-{}", std::process::id()));
        r.write_to(&dir).unwrap();
        assert!(dir.join("report.json").exists() && dir.join("covariance.csv").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn failing_verdict_carries_replay() {
        let mut cfg = quick(ExperimentKind::MeanVsFormula, 0.25);
        cfg.source = Some("cfg.toml".into());
        let p = cfg.mean_vs_formula.as_mut().unwrap();
        p.n = 5;
        p.burn_in = 0.0;
        p.horizon = 200.0;
        p.batches = 20;
        p.tolerance = 1e-9;
        let r = run_experiment(&cfg).unwrap();
        let v = &r.verdicts[0];
        assert!(!v.pass);
        let seed = v.seed.unwrap();
        assert_eq!(v.replay.as_deref(), Some(format!("iqnet run cfg.toml --seed {seed}").as_str()));
        assert!(!r.passed());
    }

    #[test]
    fn coupling_and_local_kinds_pass() {
        let mut cfg = quick(ExperimentKind::CouplingSuite, 0.3);
        cfg.coupling_suite.as_mut().unwrap().min_events = 1000;
        let r = run_experiment(&cfg).unwrap();
        assert!(r.passed(), "{}", r.summary());

        let cfg = quick(ExperimentKind::LocalVsBox, 0.3);
        let r = run_experiment(&cfg).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn growth_and_loynes_kinds() {
        let mut cfg = quick(ExperimentKind::SupercriticalGrowth, 0.5);
        cfg.supercritical_growth.as_mut().unwrap().n = 10;
        cfg.supercritical_growth.as_mut().unwrap().horizon = 1000.0;
        let r = run_experiment(&cfg).unwrap();
        assert!(r.passed(), "{}", r.summary());

        let mut cfg = quick(ExperimentKind::Loynes, 0.25);
        let p = cfg.loynes.as_mut().unwrap();
        p.n = 10;
        p.boxes = vec![3, 6];
        p.max_doublings = 5;
        p.min_converged = 0.0;
        let r = run_experiment(&cfg).unwrap();
        assert!(r.verdicts[0].pass && r.verdicts[1].pass, "{}", r.summary());
    }

    #[test]
    fn frozen_wall_short_run() {
        let mut cfg = quick(ExperimentKind::FrozenWall, 0.3);
        let p = cfg.frozen_wall.as_mut().unwrap();
        p.adjacent_time = 500.0;
        p.checkpoints = vec![100.0, 500.0];
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.verdicts[0].name, "wall-adjacent-poisson");
        assert!(r.verdicts[0].pass, "{}", r.summary());
    }
}
