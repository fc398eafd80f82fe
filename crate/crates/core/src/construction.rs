//! Exact evaluation of the infinite-lattice dynamics at a single site.
//!
//! Time is cut into blocks of length `t_hat`. In each block a site is *open*
//! when it carries at least one arrival or potential departure. The union of
//! sup-norm balls of radius `L` around open sites (the *L-thickening*) splits
//! into finite connected components. Walking the blocks backwards from the
//! target site collects a nested family of finite sets
//! `L_kappa ⊆ ... ⊆ L_1`; running the dynamics restricted to `L_r` during
//! block `r` reproduces the infinite-lattice values on `L_r` exactly,
//! because every open site of `L_r` has its whole interference ball in
//! `L_r` and closed sites do not move.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driving::DrivingStream;
use crate::dynamics::{DynamicsConfig, DynamicsError, InitialCondition, System};
use crate::interference::InterferenceSequence;
use crate::lattice::{Lattice, Region, Site};

pub const DEFAULT_CLUSTER_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructionError {
    #[error("cluster exploration from {start} in block {block} exceeded {cap} sites")]
    ClusterCapExceeded { start: Site, block: usize, cap: usize },
    #[error("invalid construction parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Block length and percolation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    /// `t_hat`.
    pub block_len: f64,
    /// Upper bound on the probability that a site is open in one block.
    pub open_probability: f64,
    /// Offspring bound `(2L+1)^d` of the dominating branching process.
    pub offspring_bound: u64,
    /// Thickening radius `L`.
    pub radius: u32,
    pub cluster_cap: usize,
}

/// Picks `B = (2L+1)^d`, `p = safety / B` and `t_hat = -ln(1-p) / (lambda+1)`,
/// so that a site is open in a block with probability exactly `p` and the
/// exploration is dominated by a subcritical branching process (`pB < 1`).
pub fn block_length(lambda: f64, radius: u32, dim: usize, safety: f64) -> Result<ConstructionParams, ConstructionError> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(ConstructionError::InvalidParameter("safety must lie in (0, 1)"));
    }
    if !(lambda >= 0.0) {
        return Err(ConstructionError::InvalidParameter("arrival rate must be >= 0"));
    }
    let bound = (2 * radius as u64 + 1).pow(dim as u32);
    let p = safety / bound as f64;
    Ok(ConstructionParams {
        block_len: -(1.0 - p).ln() / (lambda + 1.0),
        open_probability: p,
        offspring_bound: bound,
        radius,
        cluster_cap: DEFAULT_CLUSTER_CAP,
    })
}

/// Openness oracle for one time window with memoisation.
struct Openness<'a> {
    driving: &'a DrivingStream,
    window: (f64, f64),
    memo: HashMap<Site, bool>,
}

impl<'a> Openness<'a> {
    fn new(driving: &'a DrivingStream, window: (f64, f64)) -> Self {
        Self {
            driving,
            window,
            memo: HashMap::new(),
        }
    }

    fn is_open(&mut self, site: &Site) -> bool {
        if let Some(&v) = self.memo.get(site) {
            return v;
        }
        let v = self.driving.is_active(site, self.window.0, self.window.1);
        self.memo.insert(site.clone(), v);
        v
    }

    /// Whether `site` lies in the L-thickening of the open set.
    fn in_thickening(&mut self, site: &Site, radius: u32) -> bool {
        Site::ball(site, radius).iter().any(|s| self.is_open(s))
    }
}

fn star_neighbours(site: &Site) -> Vec<Site> {
    Site::ball(site, 1).into_iter().filter(|s| s != site).collect()
}

fn explore(
    open: &mut Openness<'_>,
    start: &Site,
    radius: u32,
    cap: usize,
    block: usize,
) -> Result<BTreeSet<Site>, ConstructionError> {
    let mut cluster = BTreeSet::new();
    if !open.in_thickening(start, radius) {
        return Ok(cluster);
    }
    let mut queue = VecDeque::from([start.clone()]);
    let mut seen: HashSet<Site> = HashSet::from([start.clone()]);
    while let Some(site) = queue.pop_front() {
        cluster.insert(site.clone());
        if cluster.len() > cap {
            return Err(ConstructionError::ClusterCapExceeded {
                start: start.clone(),
                block,
                cap,
            });
        }
        for next in star_neighbours(&site) {
            if seen.insert(next.clone()) && open.in_thickening(&next, radius) {
                queue.push_back(next);
            }
        }
    }
    Ok(cluster)
}

/// Connected component (sup-norm adjacency) of the L-thickened open set of
/// the window `[t0, t1)` containing `start`; empty when `start` is not in the
/// thickening.
pub fn explore_cluster(
    driving: &DrivingStream,
    window: (f64, f64),
    start: &Site,
    radius: u32,
    cap: usize,
) -> Result<BTreeSet<Site>, ConstructionError> {
    let mut open = Openness::new(driving, window);
    explore(&mut open, start, radius, cap, 0)
}

/// Nested dependency sets, `sets[r - 1] = L_r` for blocks `r = 1..=kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencySchedule {
    pub target: Site,
    pub start: f64,
    pub end: f64,
    pub block_len: f64,
    pub sets: Vec<Vec<Site>>,
}

impl DependencySchedule {
    pub fn blocks(&self) -> usize {
        self.sets.len()
    }

    pub fn window(&self, r: usize) -> (f64, f64) {
        let lo = self.start + (r as f64 - 1.0) * self.block_len;
        let hi = (self.start + r as f64 * self.block_len).min(self.end);
        (lo, hi)
    }

    pub fn is_nested(&self) -> bool {
        self.sets.windows(2).all(|w| {
            let outer: HashSet<&Site> = w[0].iter().collect();
            w[1].iter().all(|s| outer.contains(s))
        })
    }

    /// Sup-norm radius of `L_1` around the origin.
    pub fn reach(&self) -> u32 {
        self.sets.first().map(|s| s.iter().map(Site::sup_norm).max().unwrap_or(0)).unwrap_or(0)
    }
}

/// Builds `L_kappa = {k} ∪ C_kappa(k)` and
/// `L_{r-1} = L_r ∪ ⋃_{j ∈ L_r} C_{r-1}(j)` over the window `[start, end)`.
pub fn dependency_schedule(
    driving: &DrivingStream,
    target: &Site,
    start: f64,
    end: f64,
    params: &ConstructionParams,
) -> Result<DependencySchedule, ConstructionError> {
    if !(end > start) {
        return Err(ConstructionError::InvalidParameter("horizon must be positive"));
    }
    let kappa = ((end - start) / params.block_len).ceil().max(1.0) as usize;
    let mut schedule = DependencySchedule {
        target: target.clone(),
        start,
        end,
        block_len: params.block_len,
        sets: vec![Vec::new(); kappa],
    };
    let mut current: BTreeSet<Site> = BTreeSet::from([target.clone()]);
    for r in (1..=kappa).rev() {
        let mut open = Openness::new(driving, schedule.window(r));
        let mut next = current.clone();
        let mut covered: HashSet<Site> = HashSet::new();
        for j in &current {
            if covered.contains(j) {
                continue;
            }
            let cluster = explore(&mut open, j, params.radius, params.cluster_cap, r)?;
            covered.extend(cluster.iter().cloned());
            next.extend(cluster);
        }
        schedule.sets[r - 1] = next.iter().cloned().collect();
        current = next;
    }
    Ok(schedule)
}

/// Value at `target` and time `end` of the infinite-lattice dynamics started
/// at `start` from `initial`, computed by block-wise restricted runs.
pub fn evaluate(
    driving: &DrivingStream,
    seq: &InterferenceSequence,
    shift: u64,
    target: &Site,
    start: f64,
    end: f64,
    initial: &InitialCondition,
    params: &ConstructionParams,
) -> Result<u64, ConstructionError> {
    if end <= start {
        return Ok(initial.value_at(target));
    }
    let schedule = dependency_schedule(driving, target, start, end, params)?;
    evaluate_on(driving, seq, shift, &schedule, initial)
}

/// [`evaluate`] on a precomputed schedule.
pub fn evaluate_on(
    driving: &DrivingStream,
    seq: &InterferenceSequence,
    shift: u64,
    schedule: &DependencySchedule,
    initial: &InitialCondition,
) -> Result<u64, ConstructionError> {
    let mut values: HashMap<Site, u64> = HashMap::new();
    for r in 1..=schedule.blocks() {
        let set = &schedule.sets[r - 1];
        let (lo, hi) = schedule.window(r);
        let config = DynamicsConfig::new(seq.clone(), Region::Explicit(set.clone())).with_shift(shift);
        let lattice = Arc::new(Lattice::new(seq.dim(), config.region.clone(), seq).map_err(DynamicsError::from)?);
        let mut system = System::with_lattice(Arc::clone(&lattice), &config, &InitialCondition::Zero, lo)?;
        for (pos, site) in lattice.sites().iter().enumerate() {
            let v = values.get(site).copied().unwrap_or_else(|| initial.value_at(site));
            system.set_raw(pos, v);
        }
        system.advance(driving, hi)?;
        for (pos, site) in lattice.sites().iter().enumerate() {
            values.insert(site.clone(), system.raw_counts()[pos]);
        }
    }
    Ok(values
        .get(&schedule.target)
        .copied()
        .unwrap_or_else(|| initial.value_at(&schedule.target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, ProbeSpec};

    fn s(k: i64) -> Site {
        Site::new(vec![k])
    }

    #[test]
    fn block_length_examples() {
        let p = block_length(0.25, 1, 1, 0.9).unwrap();
        assert_eq!(p.offspring_bound, 3);
        assert!((p.open_probability - 0.3).abs() < 1e-15);
        // -ln(0.7) / 1.25 = 0.285340...
        assert!((p.block_len - 0.285_340).abs() < 1e-6, "{}", p.block_len);
        assert!((1.0 - p.open_probability) <= (-(0.25 + 1.0) * p.block_len).exp() + 1e-15);

        let p0 = block_length(0.0, 1, 1, 0.9).unwrap();
        assert!((p0.block_len + (0.7f64).ln()).abs() < 1e-15);

        let l0 = block_length(0.5, 0, 2, 0.9).unwrap();
        assert_eq!(l0.offspring_bound, 1);
        assert!(l0.open_probability * l0.offspring_bound as f64 <= 0.9 + 1e-15);
    }

    /// Finds a window of length `len` in which the listed sites are open and
    /// every other site in `[-span, span]` is closed.
    fn window_with_open(d: &DrivingStream, open: &[i64], span: i64, len: f64) -> (f64, f64) {
        for k in 0..200_000 {
            let w = (k as f64 * len, (k + 1) as f64 * len);
            let ok = (-span..=span).all(|i| d.is_active(&s(i), w.0, w.1) == open.contains(&i));
            if ok {
                return w;
            }
        }
        panic!("no window found");
    }

    #[test]
    fn single_open_site_gives_its_ball() {
        let d = DrivingStream::new(8, 0.2).unwrap();
        let w = window_with_open(&d, &[0], 6, 0.05);
        let c = explore_cluster(&d, w, &s(0), 1, 1000).unwrap();
        assert_eq!(c, BTreeSet::from([s(-1), s(0), s(1)]));
    }

    #[test]
    fn separated_open_sites_give_separate_clusters() {
        let d = DrivingStream::new(12, 0.2).unwrap();
        let w = window_with_open(&d, &[0, 5], 9, 0.06);
        let c0 = explore_cluster(&d, w, &s(0), 1, 1000).unwrap();
        let c5 = explore_cluster(&d, w, &s(5), 1, 1000).unwrap();
        assert_eq!(c0, BTreeSet::from([s(-1), s(0), s(1)]));
        assert_eq!(c5, BTreeSet::from([s(4), s(5), s(6)]));
        let far = explore_cluster(&d, w, &s(-6), 1, 1000).unwrap();
        assert!(far.is_empty());
    }

    #[test]
    fn cap_is_enforced() {
        let d = DrivingStream::new(1, 5.0).unwrap();
        let err = explore_cluster(&d, (0.0, 10.0), &s(0), 1, 50).unwrap_err();
        assert!(matches!(err, ConstructionError::ClusterCapExceeded { .. }));
    }

    #[test]
    fn schedules_are_nested_and_finite() {
        let params = block_length(0.3, 1, 1, 0.9).unwrap();
        for seed in 0..100 {
            let d = DrivingStream::new(seed, 0.3).unwrap();
            let sch = dependency_schedule(&d, &s(0), 0.0, 5.0, &params).unwrap();
            assert_eq!(sch.blocks(), (5.0 / params.block_len).ceil() as usize);
            assert!(sch.is_nested(), "seed {seed}");
            assert!(sch.sets.iter().all(|l| l.contains(&s(0))));
        }
        // lambda = 0: departure clocks still open sites
        let d = DrivingStream::new(3, 0.0).unwrap();
        let p = block_length(0.0, 1, 1, 0.9).unwrap();
        let sch = dependency_schedule(&d, &s(0), 0.0, 5.0, &p).unwrap();
        assert!(sch.is_nested());
        assert!(sch.sets[0].len() > 1);
    }

    #[test]
    fn trivial_evaluations() {
        let seq = InterferenceSequence::ones(1, 1);
        let params = block_length(0.0, 1, 1, 0.9).unwrap();
        let d = DrivingStream::new(5, 0.0).unwrap();
        for k in -3..=3 {
            assert_eq!(evaluate(&d, &seq, 0, &s(k), 0.0, 5.0, &InitialCondition::Zero, &params).unwrap(), 0);
        }
        let init = InitialCondition::Constant { value: 4 };
        let d = DrivingStream::new(5, 0.4).unwrap();
        assert_eq!(evaluate(&d, &seq, 0, &s(2), 0.0, 0.0, &init, &params).unwrap(), 4);
    }

    #[test]
    fn matches_big_box_for_nonzero_start() {
        let seq = InterferenceSequence::ones(1, 1);
        let params = block_length(0.3, 1, 1, 0.9).unwrap();
        let init = InitialCondition::Iid {
            law: crate::dynamics::IidLaw::Poisson { mean: 1.5 },
            seed: 4,
        };
        for seed in 0..20 {
            let d = DrivingStream::new(seed, 0.3).unwrap();
            let sch = dependency_schedule(&d, &s(0), 0.0, 4.0, &params).unwrap();
            let local = evaluate_on(&d, &seq, 0, &sch, &init).unwrap();
            let n = sch.reach() + 3;
            let cfg = DynamicsConfig::new(seq.clone(), Region::Box { n });
            let out = run(&cfg, &init, &d, 0.0, 4.0, &ProbeSpec::default()).unwrap();
            assert_eq!(out.system.count(&s(0)).unwrap().finite().unwrap(), local, "seed {seed}");
        }
    }
}
