//! Event engine for the interference dynamics on finite index sets.
//!
//! At a potential departure of queue `i` with mark `u`, one customer leaves
//! iff `u <= x_i / sum_j a_j x_{i-j}` (zero when `x_i = 0`, or `x_i <= K`
//! for the `K`-shifted variant). Arrivals add one customer. Every system is
//! driven by a [`DrivingStream`], so several systems fed the same stream are
//! coupled exactly.
//!
//! With rational weights the departure test is exact: the mark is a 53-bit
//! integer `m` and the test becomes `m * I <= x * D * 2^53` where `I` is the
//! interference scaled by the common denominator `D`. Float weights compare
//! `m / 2^53 <= x / I` in binary64 with `I` summed in offset order.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driving::{DrivingError, DrivingStream, Event, EventKind, Mark};
use crate::interference::InterferenceSequence;
use crate::lattice::{Lattice, LatticeError, Region, Site};

/// Sentinel stored in count vectors for a queue frozen at infinity.
pub const INFINITE: u64 = u64::MAX;

/// User-facing queue length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Count {
    Finite(u64),
    Infinite,
}

impl Count {
    pub fn from_raw(raw: u64) -> Self {
        if raw == INFINITE {
            Count::Infinite
        } else {
            Count::Finite(raw)
        }
    }

    pub fn raw(self) -> u64 {
        match self {
            Count::Finite(v) => v,
            Count::Infinite => INFINITE,
        }
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Count::Finite(v) => Some(v),
            Count::Infinite => None,
        }
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Finite(v) => write!(f, "{v}"),
            Count::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("site {0} is frozen")]
    FrozenSite(Site),
    #[error("site {0} is not in the index set")]
    UnknownSite(Site),
    #[error("event at {event} precedes the clock {clock}")]
    ClockRegression { clock: f64, event: f64 },
    #[error("ordering violated: {0}")]
    OrderingViolation(Box<Violation>),
    #[error("coupled systems need a common dimension")]
    IncompatibleSystems,
    #[error("invalid initial condition: {0}")]
    InvalidInitial(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Driving(#[from] DrivingError),
}

/// Arrivals to `sites` are dropped, optionally only while the event time lies
/// in `[window.0, window.1)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Suppression {
    pub sites: Vec<Site>,
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub seq: InterferenceSequence,
    pub region: Region,
    /// Departures are blocked while `x_i <= shift`.
    pub shift: u64,
    /// Pinned queues: they emit interference but see no arrivals and no
    /// departures.
    pub frozen: Vec<(Site, Count)>,
    pub suppression: Option<Suppression>,
}

impl DynamicsConfig {
    pub fn new(seq: InterferenceSequence, region: Region) -> Self {
        Self {
            seq,
            region,
            shift: 0,
            frozen: Vec::new(),
            suppression: None,
        }
    }

    pub fn with_shift(mut self, shift: u64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_frozen(mut self, frozen: Vec<(Site, Count)>) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn with_suppression(mut self, suppression: Suppression) -> Self {
        self.suppression = Some(suppression);
        self
    }

    pub fn lattice(&self) -> Result<Lattice, LatticeError> {
        Lattice::new(self.seq.dim(), self.region.clone(), &self.seq)
    }
}

/// Law of an i.i.d. initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum IidLaw {
    Poisson { mean: f64 },
    /// Geometric on `{0, 1, ...}` with the given mean.
    Geometric { mean: f64 },
    /// `floor(U^{-1/shape}) - 1`, a discrete Pareto tail of index `shape`.
    Pareto { shape: f64 },
}

/// Initial condition given by a rule that is total on `Z^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    Zero,
    Constant { value: u64 },
    /// Listed sites take the given value, all others zero.
    Explicit { values: BTreeMap<Site, u64> },
    /// `x_{sites[k]} = magnitudes[k]`, zero elsewhere.
    Sparse { sites: Vec<Site>, magnitudes: Vec<u64> },
    /// Independent draws, each a pure function of `(seed, site)`.
    Iid { law: IidLaw, seed: u64 },
}

impl InitialCondition {
    pub fn value_at(&self, site: &Site) -> u64 {
        match self {
            InitialCondition::Zero => 0,
            InitialCondition::Constant { value } => *value,
            InitialCondition::Explicit { values } => values.get(site).copied().unwrap_or(0),
            InitialCondition::Sparse { sites, magnitudes } => sites
                .iter()
                .position(|s| s == site)
                .and_then(|k| magnitudes.get(k).copied())
                .unwrap_or(0),
            InitialCondition::Iid { law, seed } => {
                let key = seed ^ site.stream_code().wrapping_mul(0x2545_f491_4f6c_dd1d);
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(key);
                match *law {
                    IidLaw::Poisson { mean } if mean > 0.0 => Poisson::new(mean).map(|p| p.sample(&mut rng) as u64).unwrap_or(0),
                    IidLaw::Poisson { .. } => 0,
                    IidLaw::Geometric { mean } => {
                        if mean <= 0.0 {
                            return 0;
                        }
                        let q = mean / (1.0 + mean);
                        let u: f64 = 1.0 - rng.random::<f64>();
                        (u.ln() / q.ln()).floor() as u64
                    }
                    IidLaw::Pareto { shape } => {
                        let u: f64 = 1.0 - rng.random::<f64>();
                        (u.powf(-1.0 / shape).floor() as u64).saturating_sub(1).min(INFINITE - 1)
                    }
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            InitialCondition::Sparse { sites, magnitudes } if sites.len() != magnitudes.len() => {
                Err(DynamicsError::InvalidInitial("sparse sites and magnitudes differ in length".into()))
            }
            InitialCondition::Iid { law: IidLaw::Pareto { shape }, .. } if *shape <= 0.0 => {
                Err(DynamicsError::InvalidInitial("pareto shape must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum WeightTable {
    Exact { numerators: Vec<u64>, denominator: u64 },
    Float(Vec<f64>),
}

/// Outcome of one applied event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Arrived,
    Departed,
    Rejected,
    /// Event at a frozen queue or a suppressed arrival.
    Ignored,
}

/// Accepted arrivals and departures per site.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteLedger {
    pub arrivals: u64,
    pub departures: u64,
}

/// Snapshot of a system's queue lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub region: Region,
    pub sites: Vec<Site>,
    pub counts: Vec<Count>,
    pub clock: f64,
}

impl QueueState {
    pub fn count(&self, site: &Site) -> Count {
        self.sites
            .binary_search(site)
            .map(|k| self.counts[k])
            .unwrap_or(Count::Finite(0))
    }
}

/// A finite system in motion: index set, rule parameters and current state.
#[derive(Debug, Clone)]
pub struct System {
    lattice: Arc<Lattice>,
    weights: WeightTable,
    shift: u64,
    frozen: Vec<bool>,
    suppressed: Vec<bool>,
    suppress_window: Option<(f64, f64)>,
    counts: Vec<u64>,
    clock: f64,
    ledger: Vec<SiteLedger>,
}

impl System {
    pub fn new(config: &DynamicsConfig, initial: &InitialCondition, clock: f64) -> Result<Self, DynamicsError> {
        Self::with_lattice(Arc::new(config.lattice()?), config, initial, clock)
    }

    /// Builds a system on a prebuilt lattice (which must match `config`).
    pub fn with_lattice(
        lattice: Arc<Lattice>,
        config: &DynamicsConfig,
        initial: &InitialCondition,
        clock: f64,
    ) -> Result<Self, DynamicsError> {
        initial.validate()?;
        let n = lattice.len();
        let weights = match config.seq.exact() {
            Some(e) => WeightTable::Exact {
                numerators: e.numerators.clone(),
                denominator: e.denominator,
            },
            None => WeightTable::Float(config.seq.weights().to_vec()),
        };
        let mut counts: Vec<u64> = lattice.sites().iter().map(|s| initial.value_at(s)).collect();
        let mut frozen = vec![false; n];
        for (site, value) in &config.frozen {
            let p = lattice.position(site).ok_or_else(|| DynamicsError::UnknownSite(site.clone()))?;
            frozen[p] = true;
            counts[p] = value.raw();
        }
        let mut suppressed = vec![false; n];
        let mut suppress_window = None;
        if let Some(s) = &config.suppression {
            for site in &s.sites {
                if let Some(p) = lattice.position(site) {
                    suppressed[p] = true;
                }
            }
            suppress_window = s.window;
        }
        Ok(Self {
            lattice,
            weights,
            shift: config.shift,
            frozen,
            suppressed,
            suppress_window,
            counts,
            clock,
            ledger: vec![SiteLedger::default(); n],
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Raw counts aligned with `lattice().sites()`; frozen-at-infinity queues
    /// hold [`INFINITE`].
    pub fn raw_counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, site: &Site) -> Option<Count> {
        self.lattice.position(site).map(|p| Count::from_raw(self.counts[p]))
    }

    pub fn is_frozen(&self, pos: usize) -> bool {
        self.frozen[pos]
    }

    pub fn ledger(&self) -> &[SiteLedger] {
        &self.ledger
    }

    pub fn snapshot(&self) -> QueueState {
        QueueState {
            region: self.lattice.region().clone(),
            sites: self.lattice.sites().to_vec(),
            counts: self.counts.iter().map(|&c| Count::from_raw(c)).collect(),
            clock: self.clock,
        }
    }

    /// Sum of all finite counts.
    pub fn total_finite(&self) -> u64 {
        self.counts.iter().filter(|&&c| c != INFINITE).sum()
    }

    /// `(x_i, scaled interference)` or `None` when the rate is zero.
    #[inline]
    fn rate_parts(&self, pos: usize) -> Option<(u64, Interference)> {
        let x = self.counts[pos];
        if x <= self.shift || x == INFINITE {
            return None;
        }
        match &self.weights {
            WeightTable::Exact { numerators, .. } => {
                let mut sum: u128 = 0;
                for &(q, k) in self.lattice.neighbours(pos) {
                    let c = self.counts[q as usize];
                    if c == INFINITE {
                        return None;
                    }
                    sum += numerators[k as usize] as u128 * c as u128;
                }
                Some((x, Interference::Exact(sum)))
            }
            WeightTable::Float(w) => {
                let mut sum = 0.0;
                for &(q, k) in self.lattice.neighbours(pos) {
                    let c = self.counts[q as usize];
                    if c == INFINITE {
                        return None;
                    }
                    sum += w[k as usize] * c as f64;
                }
                Some((x, Interference::Float(sum)))
            }
        }
    }

    /// Instantaneous departure probability of the queue at `pos`.
    pub fn departure_probability(&self, pos: usize) -> Result<f64, DynamicsError> {
        if self.frozen[pos] {
            return Err(DynamicsError::FrozenSite(self.lattice.sites()[pos].clone()));
        }
        Ok(self.rate_at(pos))
    }

    /// Same as [`departure_probability`](Self::departure_probability) but
    /// returns zero at frozen queues.
    #[inline]
    pub fn rate_at(&self, pos: usize) -> f64 {
        if self.frozen[pos] {
            return 0.0;
        }
        match self.rate_parts(pos) {
            None => 0.0,
            Some((x, Interference::Exact(sum))) => {
                let WeightTable::Exact { denominator, .. } = &self.weights else { unreachable!() };
                (x as f64 * *denominator as f64) / sum as f64
            }
            Some((x, Interference::Float(sum))) => x as f64 / sum,
        }
    }

    #[inline]
    fn accepts(&self, pos: usize, mark: Mark) -> bool {
        match self.rate_parts(pos) {
            None => false,
            Some((x, Interference::Exact(sum))) => {
                let WeightTable::Exact { denominator, .. } = &self.weights else { unreachable!() };
                let lhs = (mark.raw() as u128).checked_mul(sum);
                let rhs = (x as u128 * *denominator as u128).checked_mul(1u128 << Mark::BITS);
                match (lhs, rhs) {
                    (Some(l), Some(r)) => l <= r,
                    _ => mark.value() <= (x as f64 * *denominator as f64) / sum as f64,
                }
            }
            Some((x, Interference::Float(sum))) => mark.value() <= x as f64 / sum,
        }
    }

    fn arrival_allowed(&self, pos: usize, time: f64) -> bool {
        if !self.suppressed[pos] {
            return true;
        }
        match self.suppress_window {
            None => false,
            Some((s, t)) => !(time >= s && time < t),
        }
    }

    /// Applies one event addressed by lattice position.
    #[inline]
    pub fn apply_event(&mut self, event: &Event) -> Result<Outcome, DynamicsError> {
        if event.time < self.clock {
            return Err(DynamicsError::ClockRegression {
                clock: self.clock,
                event: event.time,
            });
        }
        self.clock = event.time;
        let pos = event.site;
        if self.frozen[pos] {
            return Ok(Outcome::Ignored);
        }
        match event.kind {
            EventKind::Arrival => {
                if !self.arrival_allowed(pos, event.time) {
                    return Ok(Outcome::Ignored);
                }
                self.counts[pos] += 1;
                self.ledger[pos].arrivals += 1;
                Ok(Outcome::Arrived)
            }
            EventKind::PotentialDeparture(mark) => {
                if self.accepts(pos, mark) {
                    self.counts[pos] -= 1;
                    self.ledger[pos].departures += 1;
                    Ok(Outcome::Departed)
                } else {
                    Ok(Outcome::Rejected)
                }
            }
        }
    }

    /// Moves the clock forward without events (for window ends).
    pub fn set_clock(&mut self, t: f64) -> Result<(), DynamicsError> {
        if t < self.clock {
            return Err(DynamicsError::ClockRegression { clock: self.clock, event: t });
        }
        self.clock = t;
        Ok(())
    }

    /// Consumes every event of `driving` on this index set in
    /// `[clock, until)` and leaves the clock at `until`.
    pub fn advance(&mut self, driving: &DrivingStream, until: f64) -> Result<(), DynamicsError> {
        if until <= self.clock {
            return self.set_clock(until);
        }
        let lattice = Arc::clone(&self.lattice);
        for event in driving.feed(lattice.sites(), self.clock, until)? {
            self.apply_event(&event)?;
        }
        self.clock = until;
        Ok(())
    }

    /// Overwrites a single count; used by the local construction to thread
    /// state between blocks.
    pub(crate) fn set_raw(&mut self, pos: usize, value: u64) {
        self.counts[pos] = value;
    }
}

#[derive(Debug, Clone, Copy)]
enum Interference {
    Exact(u128),
    Float(f64),
}

/// Sites and times at which [`run`] records the state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub sites: Vec<Site>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub time: f64,
    pub counts: Vec<Count>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub system: System,
    pub probes: Vec<ProbeSample>,
    pub events: u64,
}

fn probe(system: &System, positions: &[Option<usize>], time: f64) -> ProbeSample {
    ProbeSample {
        time,
        counts: positions
            .iter()
            .map(|p| p.map(|p| Count::from_raw(system.counts[p])).unwrap_or(Count::Finite(0)))
            .collect(),
        probabilities: positions.iter().map(|p| p.map(|p| system.rate_at(p)).unwrap_or(0.0)).collect(),
    }
}

/// Evolves a fresh system from `t0` to `t1`, recording probes at the
/// requested times (state just before any event later than the probe time).
pub fn run(
    config: &DynamicsConfig,
    initial: &InitialCondition,
    driving: &DrivingStream,
    t0: f64,
    t1: f64,
    probes: &ProbeSpec,
) -> Result<RunOutput, DynamicsError> {
    let system = System::new(config, initial, t0)?;
    run_system(system, driving, t1, probes)
}

/// [`run`] for an already constructed system.
pub fn run_system(mut system: System, driving: &DrivingStream, t1: f64, probes: &ProbeSpec) -> Result<RunOutput, DynamicsError> {
    let t0 = system.clock;
    let positions: Vec<Option<usize>> = probes.sites.iter().map(|s| system.lattice.position(s)).collect();
    let mut times: Vec<f64> = probes.times.iter().copied().filter(|&t| t >= t0 && t <= t1).collect();
    times.sort_by(f64::total_cmp);
    let mut next = 0;
    let mut samples = Vec::with_capacity(times.len());
    let mut events = 0;
    let lattice = Arc::clone(&system.lattice);
    if t1 > t0 {
        for event in driving.feed(lattice.sites(), t0, t1)? {
            while next < times.len() && times[next] < event.time {
                samples.push(probe(&system, &positions, times[next]));
                next += 1;
            }
            system.apply_event(&event)?;
            events += 1;
        }
    }
    system.clock = t1.max(t0);
    while next < times.len() {
        samples.push(probe(&system, &positions, times[next]));
        next += 1;
    }
    Ok(RunOutput {
        system,
        probes: samples,
        events,
    })
}

/// Declares that system `lower` must stay coordinate-wise below `upper` on
/// every site of `lower` (sites missing from `upper` count as zero there).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingSpec {
    pub lower: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub event_index: u64,
    pub time: f64,
    pub site: Site,
    pub lower: usize,
    pub upper: usize,
    pub lower_count: Count,
    pub upper_count: Count,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "event {} at t={} site {}: system {} has {} > system {} has {}",
            self.event_index, self.time, self.site, self.lower, self.lower_count, self.upper, self.upper_count
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub events_checked: u64,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone)]
pub struct CoupledOutcome {
    pub systems: Vec<System>,
    pub report: OrderingReport,
}

/// Evolves several systems on one shared event list over `[t0, t1)` and
/// audits the declared orderings after every event. With `strict`, the
/// first violation aborts with [`DynamicsError::OrderingViolation`].
pub fn coupled_run(
    mut systems: Vec<System>,
    orderings: &[OrderingSpec],
    driving: &DrivingStream,
    t0: f64,
    t1: f64,
    strict: bool,
) -> Result<CoupledOutcome, DynamicsError> {
    let dim = systems.first().map(|s| s.lattice.dim()).unwrap_or(1);
    if systems.iter().any(|s| s.lattice.dim() != dim) {
        return Err(DynamicsError::IncompatibleSystems);
    }
    let mut universe: Vec<Site> = systems.iter().flat_map(|s| s.lattice.sites().iter().cloned()).collect();
    universe.sort();
    universe.dedup();
    let maps: Vec<Vec<Option<usize>>> = systems
        .iter()
        .map(|s| universe.iter().map(|site| s.lattice.position(site)).collect())
        .collect();
    for s in systems.iter_mut() {
        s.set_clock(t0)?;
    }

    let mut report = OrderingReport::default();
    let check = |systems: &[System], u: usize, index: u64, time: f64, report: &mut OrderingReport| -> Option<Violation> {
        let mut first = None;
        for o in orderings {
            let Some(pl) = maps[o.lower][u] else { continue };
            let lo = systems[o.lower].counts[pl];
            let hi = maps[o.upper][u].map(|p| systems[o.upper].counts[p]).unwrap_or(0);
            if lo > hi {
                let v = Violation {
                    event_index: index,
                    time,
                    site: universe[u].clone(),
                    lower: o.lower,
                    upper: o.upper,
                    lower_count: Count::from_raw(lo),
                    upper_count: Count::from_raw(hi),
                };
                report.violations.push(v.clone());
                first.get_or_insert(v);
            }
        }
        first
    };

    for u in 0..universe.len() {
        if let Some(v) = check(&systems, u, 0, t0, &mut report) {
            if strict {
                return Err(DynamicsError::OrderingViolation(Box::new(v)));
            }
        }
    }
    if t1 > t0 {
        for (index, event) in driving.feed(&universe, t0, t1)?.enumerate() {
            let u = event.site;
            for (k, s) in systems.iter_mut().enumerate() {
                if let Some(p) = maps[k][u] {
                    s.apply_event(&Event { site: p, ..event })?;
                } else {
                    s.clock = event.time;
                }
            }
            report.events_checked += 1;
            if let Some(v) = check(&systems, u, index as u64 + 1, event.time, &mut report) {
                if strict {
                    return Err(DynamicsError::OrderingViolation(Box::new(v)));
                }
            }
        }
    }
    for s in systems.iter_mut() {
        s.clock = t1.max(t0);
    }
    Ok(CoupledOutcome { systems, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w3() -> InterferenceSequence {
        InterferenceSequence::ones(1, 1)
    }

    fn s(k: i64) -> Site {
        Site::new(vec![k])
    }

    fn explicit(pairs: &[(i64, u64)]) -> InitialCondition {
        InitialCondition::Explicit {
            values: pairs.iter().map(|&(k, v)| (s(k), v)).collect(),
        }
    }

    fn torus(n: u32) -> DynamicsConfig {
        DynamicsConfig::new(w3(), Region::Torus { n })
    }

    #[test]
    fn departure_probability_examples() {
        let sys = System::new(&torus(5), &InitialCondition::Zero, 0.0).unwrap();
        let p0 = sys.lattice().position(&s(0)).unwrap();
        assert_eq!(sys.departure_probability(p0).unwrap(), 0.0);

        let sys = System::new(&torus(5), &explicit(&[(0, 5)]), 0.0).unwrap();
        assert_eq!(sys.departure_probability(p0).unwrap(), 1.0);

        let sys = System::new(&torus(5), &explicit(&[(-1, 2), (0, 3), (1, 4)]), 0.0).unwrap();
        assert!((sys.departure_probability(p0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn frozen_and_infinite_neighbours() {
        let cfg = torus(5).with_frozen(vec![(s(1), Count::Infinite)]);
        let sys = System::new(&cfg, &explicit(&[(0, 4)]), 0.0).unwrap();
        let p0 = sys.lattice().position(&s(0)).unwrap();
        let p1 = sys.lattice().position(&s(1)).unwrap();
        assert_eq!(sys.departure_probability(p0).unwrap(), 0.0);
        assert!(matches!(sys.departure_probability(p1), Err(DynamicsError::FrozenSite(_))));
        assert_eq!(sys.count(&s(1)), Some(Count::Infinite));
    }

    #[test]
    fn k_shift_blocks_low_queues() {
        let cfg = torus(5).with_shift(2);
        let sys = System::new(&cfg, &explicit(&[(0, 2)]), 0.0).unwrap();
        let p0 = sys.lattice().position(&s(0)).unwrap();
        assert_eq!(sys.departure_probability(p0).unwrap(), 0.0);
        let sys = System::new(&cfg, &explicit(&[(0, 3)]), 0.0).unwrap();
        assert_eq!(sys.departure_probability(p0).unwrap(), 1.0);
    }

    #[test]
    fn apply_event_examples() {
        let cfg = torus(3).with_frozen(vec![(s(2), Count::Finite(7))]);
        let mut sys = System::new(&cfg, &explicit(&[(0, 1), (1, 2)]), 0.0).unwrap();
        let p = |k| sys.lattice().position(&s(k)).unwrap();
        let (p0, p2) = (p(0), p(2));
        let before = sys.raw_counts().to_vec();
        let out = sys
            .apply_event(&Event { time: 1.0, site: p2, kind: EventKind::Arrival })
            .unwrap();
        assert_eq!(out, Outcome::Ignored);
        assert_eq!(sys.raw_counts(), &before[..]);
        assert_eq!(sys.clock(), 1.0);

        // probability 1/(1+2) < 1: mark just below one is rejected
        let out = sys
            .apply_event(&Event {
                time: 2.0,
                site: p0,
                kind: EventKind::PotentialDeparture(Mark::from_f64(1.0)),
            })
            .unwrap();
        assert_eq!(out, Outcome::Rejected);
        let out = sys
            .apply_event(&Event {
                time: 3.0,
                site: p0,
                kind: EventKind::PotentialDeparture(Mark::from_f64(0.0)),
            })
            .unwrap();
        assert_eq!(out, Outcome::Departed);
        assert_eq!(sys.count(&s(0)), Some(Count::Finite(0)));
        let err = sys
            .apply_event(&Event { time: 2.5, site: p0, kind: EventKind::Arrival })
            .unwrap_err();
        assert!(matches!(err, DynamicsError::ClockRegression { .. }));
    }

    #[test]
    fn exact_threshold_is_inclusive() {
        // x=1, I=3 => probability exactly 1/3; a mark equal to 1/3 rounded up
        // is rejected, rounded down accepted.
        let mut sys = System::new(&torus(3), &explicit(&[(-1, 1), (0, 1), (1, 1)]), 0.0).unwrap();
        let p0 = sys.lattice().position(&s(0)).unwrap();
        let third_down = Mark::from_raw((1u64 << 53) / 3);
        let third_up = Mark::from_raw((1u64 << 53) / 3 + 1);
        let mut twin = sys.clone();
        let ev = |m| Event { time: 1.0, site: p0, kind: EventKind::PotentialDeparture(m) };
        assert_eq!(sys.apply_event(&ev(third_up)).unwrap(), Outcome::Rejected);
        assert_eq!(twin.apply_event(&ev(third_down)).unwrap(), Outcome::Departed);
    }

    #[test]
    fn run_without_arrivals_stays_empty() {
        let d = DrivingStream::new(1, 0.0).unwrap();
        let out = run(&torus(4), &InitialCondition::Zero, &d, 0.0, 100.0, &ProbeSpec::default()).unwrap();
        assert!(out.system.raw_counts().iter().all(|&c| c == 0));
        assert_eq!(out.system.clock(), 100.0);
    }

    #[test]
    fn single_site_is_mm1() {
        // Isolated queue with a_0 = 1: departure probability is one whenever
        // x > 0, so x is an M/M/1 queue with mean lambda / (1 - lambda).
        let seq = InterferenceSequence::validate(1, [(s(0), crate::interference::Weight::Float(1.0))]).unwrap();
        let cfg = DynamicsConfig::new(seq, Region::Explicit(vec![s(0)]));
        let lambda = 0.5;
        let d = DrivingStream::new(77, lambda).unwrap();
        let mut sys = System::new(&cfg, &InitialCondition::Zero, 0.0).unwrap();
        let mut area = 0.0;
        let mut last = 0.0;
        let horizon = 200_000.0;
        for e in d.feed(sys.lattice().sites(), 0.0, horizon).unwrap() {
            area += sys.raw_counts()[0] as f64 * (e.time - last);
            last = e.time;
            sys.apply_event(&e).unwrap();
        }
        area += sys.raw_counts()[0] as f64 * (horizon - last);
        let mean = area / horizon;
        // M/M/1 at rho = 0.5: mean 1, relaxation time ~ 1/(1-sqrt(rho))^2 ~ 12;
        // the standard error over 2e5 units is below 0.02.
        assert!((mean - 1.0).abs() < 0.06, "{mean}");
    }

    #[test]
    fn k_shift_floor_holds_on_probes() {
        let cfg = torus(10).with_shift(3);
        let d = DrivingStream::new(5, 0.25).unwrap();
        let probes = ProbeSpec {
            sites: (-10..=10).map(s).collect(),
            times: (0..200).map(|k| k as f64 * 2.5).collect(),
        };
        let out = run(&cfg, &InitialCondition::Constant { value: 3 }, &d, 0.0, 500.0, &probes).unwrap();
        assert_eq!(out.probes.len(), 200);
        for p in &out.probes {
            assert!(p.counts.iter().all(|c| c.finite().unwrap() >= 3));
        }
    }

    #[test]
    fn ledger_conserves_customers() {
        let d = DrivingStream::new(3, 0.3).unwrap();
        let init = InitialCondition::Iid {
            law: IidLaw::Poisson { mean: 2.0 },
            seed: 9,
        };
        let out = run(&torus(8), &init, &d, 0.0, 300.0, &ProbeSpec::default()).unwrap();
        for (k, site) in out.system.lattice().sites().iter().enumerate() {
            let l = out.system.ledger()[k];
            assert_eq!(out.system.raw_counts()[k], init.value_at(site) + l.arrivals - l.departures);
        }
    }

    #[test]
    fn coupled_examples() {
        let d = DrivingStream::new(21, 0.3).unwrap();
        let cfg = torus(6);
        let a = System::new(&cfg, &InitialCondition::Zero, 0.0).unwrap();
        let b = System::new(&cfg, &InitialCondition::Constant { value: 5 }, 0.0).unwrap();
        let out = coupled_run(vec![a, b], &[OrderingSpec { lower: 0, upper: 1 }], &d, 0.0, 200.0, true).unwrap();
        assert!(out.report.violations.is_empty());
        assert!(out.report.events_checked > 1000);

        let boxed = System::new(&DynamicsConfig::new(w3(), Region::Box { n: 6 }), &InitialCondition::Zero, 0.0).unwrap();
        let tor = System::new(&cfg, &InitialCondition::Zero, 0.0).unwrap();
        let out = coupled_run(vec![boxed, tor], &[OrderingSpec { lower: 0, upper: 1 }], &d, 0.0, 200.0, true).unwrap();
        assert!(out.report.violations.is_empty());

        let sup = Suppression {
            sites: (-2..=2).map(s).collect(),
            window: Some((50.0, 150.0)),
        };
        let with = System::new(&cfg.clone().with_suppression(sup), &InitialCondition::Zero, 0.0).unwrap();
        let without = System::new(&cfg, &InitialCondition::Zero, 0.0).unwrap();
        let out = coupled_run(vec![with, without], &[OrderingSpec { lower: 0, upper: 1 }], &d, 0.0, 200.0, true).unwrap();
        assert!(out.report.violations.is_empty());
    }

    #[test]
    fn strict_mode_reports_reversed_ordering() {
        let d = DrivingStream::new(4, 0.3).unwrap();
        let cfg = torus(3);
        let a = System::new(&cfg, &InitialCondition::Zero, 0.0).unwrap();
        let b = System::new(&cfg, &InitialCondition::Constant { value: 1 }, 0.0).unwrap();
        let err = coupled_run(vec![a, b], &[OrderingSpec { lower: 1, upper: 0 }], &d, 0.0, 10.0, true).unwrap_err();
        assert!(matches!(err, DynamicsError::OrderingViolation(_)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn ordered_initials_stay_ordered(
                seed in any::<u64>(),
                base in prop::collection::vec(0u64..4, 15),
                extra in prop::collection::vec(0u64..4, 15),
                radius in 1u32..=2,
            ) {
                let seq = InterferenceSequence::ones(1, radius);
                let cfg = DynamicsConfig::new(seq, Region::Torus { n: 7 });
                let lo = InitialCondition::Explicit {
                    values: (-7..=7).zip(&base).map(|(k, &v)| (s(k), v)).collect(),
                };
                let hi = InitialCondition::Explicit {
                    values: (-7..=7).zip(base.iter().zip(&extra)).map(|(k, (&v, &e))| (s(k), v + e)).collect(),
                };
                let d = DrivingStream::new(seed, 0.3).unwrap();
                let systems = vec![
                    System::new(&cfg, &lo, 0.0).unwrap(),
                    System::new(&cfg, &hi, 0.0).unwrap(),
                ];
                let out = coupled_run(systems, &[OrderingSpec { lower: 0, upper: 1 }], &d, 0.0, 550.0, false).unwrap();
                prop_assert!(out.report.events_checked >= 5_000);
                prop_assert!(out.report.violations.is_empty());
            }
        }
    }
}
