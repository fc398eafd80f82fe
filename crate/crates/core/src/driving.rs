//! Driving data: per-queue Poisson arrivals and marked potential departures.
//!
//! Randomness is counter-style. The realisation of queue `q` in time block
//! `m` (the half-open interval `[m b, (m+1) b)`) is generated from a
//! generator whose 256-bit state is a hash of `(seed, code(q), m, kind)`.
//! Any window, any index set and any past horizon therefore read identical
//! events wherever they overlap, which is what makes every coupling in the
//! crate exact.
//!
//! Arrivals and departures use separate substreams, so the departure marks
//! do not depend on the arrival rate.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::Exp1;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Site;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrivingError {
    #[error("empty window [{t0}, {t1})")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("invalid driving parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Uniform mark of a potential departure, stored as a 53-bit integer `m`
/// representing `m / 2^53` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Mark(u64);

impl Mark {
    pub const BITS: u32 = 53;

    pub fn from_raw(raw: u64) -> Self {
        Mark(raw & ((1 << Self::BITS) - 1))
    }

    /// Closest representable mark to `u` (clamped to `[0, 1)`); for tests and
    /// hand-built events.
    pub fn from_f64(u: f64) -> Self {
        let max = (1u64 << Self::BITS) - 1;
        Mark(((u.clamp(0.0, 1.0)) * (1u64 << Self::BITS) as f64).min(max as f64) as u64)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / (1u64 << Self::BITS) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Arrival,
    PotentialDeparture(Mark),
}

impl EventKind {
    fn order(&self) -> u8 {
        match self {
            EventKind::Arrival => 0,
            EventKind::PotentialDeparture(_) => 1,
        }
    }
}

/// An event addressed by position in the site slice it was generated for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: usize,
    pub kind: EventKind,
}

/// An event addressed by lattice coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteEvent {
    pub time: f64,
    pub site: Site,
    pub kind: EventKind,
}

/// Raw content of one `(queue, block)` cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockEvents {
    pub arrivals: Vec<f64>,
    pub departures: Vec<(f64, Mark)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub arrivals: u64,
    pub departures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrivingStream {
    seed: u64,
    arrival_rate: f64,
    block_len: f64,
}

const ARRIVALS: u64 = 0x61;
const DEPARTURES: u64 = 0x64;

#[inline]
fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

impl DrivingStream {
    pub fn new(seed: u64, arrival_rate: f64) -> Result<Self, DrivingError> {
        Self::with_block_len(seed, arrival_rate, 1.0)
    }

    pub fn with_block_len(seed: u64, arrival_rate: f64, block_len: f64) -> Result<Self, DrivingError> {
        if !(arrival_rate >= 0.0 && arrival_rate.is_finite()) {
            return Err(DrivingError::InvalidParameter("arrival rate must be finite and >= 0"));
        }
        if !(block_len > 0.0 && block_len.is_finite()) {
            return Err(DrivingError::InvalidParameter("block length must be positive"));
        }
        Ok(Self {
            seed,
            arrival_rate,
            block_len,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }

    pub fn block_len(&self) -> f64 {
        self.block_len
    }

    /// Same seed and block length, different arrival rate.
    pub fn with_rate(&self, arrival_rate: f64) -> Result<Self, DrivingError> {
        Self::with_block_len(self.seed, arrival_rate, self.block_len)
    }

    fn substream(&self, code: u64, block: i64, kind: u64) -> Xoshiro256PlusPlus {
        let mut h = fmix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        h = fmix64(h ^ code.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        h = fmix64(h ^ (block as u64).wrapping_mul(0x94d0_49bb_1331_11eb));
        h = fmix64(h ^ kind);
        let mut seed = [0u8; 32];
        for (k, chunk) in seed.chunks_exact_mut(8).enumerate() {
            let word = fmix64(h.wrapping_add((k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        Xoshiro256PlusPlus::from_seed(seed)
    }

    fn block_start(&self, block: i64) -> f64 {
        block as f64 * self.block_len
    }

    /// Calls `visit` for every event of the cell: arrivals in increasing
    /// time order, then departures in increasing time order.
    #[inline]
    fn visit_block(&self, code: u64, block: i64, mut visit: impl FnMut(f64, EventKind)) {
        let start = self.block_start(block);
        if self.arrival_rate > 0.0 {
            let mut rng = self.substream(code, block, ARRIVALS);
            let mut offset = 0.0;
            loop {
                let gap: f64 = rng.sample(Exp1);
                offset += gap / self.arrival_rate;
                if offset >= self.block_len {
                    break;
                }
                visit(start + offset, EventKind::Arrival);
            }
        }
        let mut rng = self.substream(code, block, DEPARTURES);
        let mut offset = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            offset += gap;
            if offset >= self.block_len {
                break;
            }
            let mark = Mark::from_raw(rng.next_u64() >> 11);
            visit(start + offset, EventKind::PotentialDeparture(mark));
        }
    }

    /// Events of one `(queue, block)` cell.
    pub fn block(&self, site: &Site, block: i64) -> BlockEvents {
        let mut out = BlockEvents::default();
        let code = site.stream_code();
        self.visit_block(code, block, |t, kind| match kind {
            EventKind::Arrival => out.arrivals.push(t),
            EventKind::PotentialDeparture(m) => out.departures.push((t, m)),
        });
        out
    }

    fn block_range(&self, t0: f64, t1: f64) -> (i64, i64) {
        let first = (t0 / self.block_len).floor() as i64;
        let last = (t1 / self.block_len).ceil() as i64;
        (first, last)
    }

    /// Whether `site` carries at least one event in `[t0, t1)`.
    pub fn is_active(&self, site: &Site, t0: f64, t1: f64) -> bool {
        let code = site.stream_code();
        let (first, last) = self.block_range(t0, t1);
        let mut found = false;
        for block in first..last {
            self.visit_block(code, block, |t, _| found |= t >= t0 && t < t1);
            if found {
                return true;
            }
        }
        false
    }

    /// Chronological events on `sites` in `[t0, t1)`. Ties (a binary64
    /// artefact) break by lexicographic site, then arrival before departure.
    pub fn events_in(&self, sites: &[Site], t0: f64, t1: f64) -> Result<Vec<SiteEvent>, DrivingError> {
        let mut sorted = sites.to_vec();
        sorted.sort();
        sorted.dedup();
        let feed = self.feed(&sorted, t0, t1)?;
        Ok(feed
            .map(|e| SiteEvent {
                time: e.time,
                site: sorted[e.site].clone(),
                kind: e.kind,
            })
            .collect())
    }

    /// Streaming variant of [`events_in`](Self::events_in) for a slice that is
    /// already sorted lexicographically; events carry positions into `sites`.
    pub fn feed(&self, sites: &[Site], t0: f64, t1: f64) -> Result<EventFeed<'_>, DrivingError> {
        if !(t0 < t1) {
            return Err(DrivingError::EmptyWindow { t0, t1 });
        }
        let (first, last) = self.block_range(t0, t1);
        Ok(EventFeed {
            stream: self,
            codes: sites.iter().map(Site::stream_code).collect(),
            t0,
            t1,
            next_block: first,
            last_block: last,
            buffer: Vec::new(),
            pos: 0,
        })
    }

    /// Arrival and potential-departure counts of `site` over `[0, horizon)`.
    pub fn count_statistics(&self, site: &Site, horizon: f64) -> Counts {
        let code = site.stream_code();
        let (first, last) = self.block_range(0.0, horizon);
        let mut counts = Counts {
            arrivals: 0,
            departures: 0,
        };
        for block in first..last {
            self.visit_block(code, block, |t, kind| {
                if t >= 0.0 && t < horizon {
                    match kind {
                        EventKind::Arrival => counts.arrivals += 1,
                        EventKind::PotentialDeparture(_) => counts.departures += 1,
                    }
                }
            });
        }
        counts
    }
}

/// Iterator over the merged events of a fixed site slice, one driving block
/// at a time.
pub struct EventFeed<'a> {
    stream: &'a DrivingStream,
    codes: Vec<u64>,
    t0: f64,
    t1: f64,
    next_block: i64,
    last_block: i64,
    buffer: Vec<Event>,
    pos: usize,
}

impl EventFeed<'_> {
    fn refill(&mut self) -> bool {
        while self.next_block < self.last_block {
            let block = self.next_block;
            self.next_block += 1;
            self.buffer.clear();
            self.pos = 0;
            let (t0, t1) = (self.t0, self.t1);
            for (site, &code) in self.codes.iter().enumerate() {
                let buffer = &mut self.buffer;
                self.stream.visit_block(code, block, |time, kind| {
                    if time >= t0 && time < t1 {
                        buffer.push(Event { time, site, kind });
                    }
                });
            }
            self.buffer.sort_by(|a, b| {
                a.time
                    .total_cmp(&b.time)
                    .then(a.site.cmp(&b.site))
                    .then(a.kind.order().cmp(&b.kind.order()))
            });
            if !self.buffer.is_empty() {
                return true;
            }
        }
        false
    }
}

impl Iterator for EventFeed<'_> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if self.pos >= self.buffer.len() && !self.refill() {
            return None;
        }
        let e = self.buffer[self.pos];
        self.pos += 1;
        Some(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

    fn line(n: i64) -> Vec<Site> {
        (-n..=n).map(|k| Site::new(vec![k])).collect()
    }

    #[test]
    fn zero_rate_has_only_departures() {
        let d = DrivingStream::new(7, 0.0).unwrap();
        let ev = d.events_in(&line(3), 0.0, 50.0).unwrap();
        assert!(!ev.is_empty());
        assert!(ev.iter().all(|e| matches!(e.kind, EventKind::PotentialDeparture(_))));
        assert_eq!(d.count_statistics(&Site::new(vec![0]), 1000.0).arrivals, 0);
    }

    #[test]
    fn repeated_queries_are_identical() {
        let d = DrivingStream::new(11, 0.4).unwrap();
        let a = d.events_in(&line(4), -3.5, 7.25).unwrap();
        let b = d.events_in(&line(4), -3.5, 7.25).unwrap();
        assert_eq!(a, b);
        assert_eq!(d.block(&Site::new(vec![2]), -4), d.block(&Site::new(vec![2]), -4));
    }

    #[test]
    fn deeper_window_restricts_exactly() {
        let d = DrivingStream::new(3, 0.25).unwrap();
        let short = d.events_in(&line(2), -16.0, 0.0).unwrap();
        let long = d.events_in(&line(2), -32.0, 0.0).unwrap();
        let restricted: Vec<_> = long.into_iter().filter(|e| e.time >= -16.0).collect();
        assert_eq!(short, restricted);
    }

    #[test]
    fn site_subsets_see_the_same_events() {
        let d = DrivingStream::new(5, 0.3).unwrap();
        let big = d.events_in(&line(5), 0.0, 20.0).unwrap();
        let small = d.events_in(&line(1), 0.0, 20.0).unwrap();
        let filtered: Vec<_> = big.into_iter().filter(|e| e.site.coords()[0].abs() <= 1).collect();
        assert_eq!(small, filtered);
    }

    #[test]
    fn events_are_ordered_and_marks_in_range() {
        let d = DrivingStream::with_block_len(9, 0.7, 0.5).unwrap();
        let ev = d.events_in(&line(3), -2.0, 9.0).unwrap();
        for w in ev.windows(2) {
            assert!(w[0].time <= w[1].time);
        }
        for e in &ev {
            assert!(e.time >= -2.0 && e.time < 9.0);
            if let EventKind::PotentialDeparture(m) = e.kind {
                assert!((0.0..1.0).contains(&m.value()));
            }
        }
        assert!(matches!(d.events_in(&line(1), 1.0, 1.0), Err(DrivingError::EmptyWindow { .. })));
    }

    #[test]
    fn count_bands() {
        // Poisson with mean m: four standard deviations is 4 sqrt(m).
        let d = DrivingStream::new(2024, 0.25).unwrap();
        let c = d.count_statistics(&Site::new(vec![0]), 1e5);
        assert!((c.arrivals as f64 - 25_000.0).abs() <= 4.0 * 25_000f64.sqrt(), "{c:?}");
        assert!((c.departures as f64 - 1e5).abs() <= 4.0 * 1e5f64.sqrt(), "{c:?}");
    }

    #[test]
    fn block_counts_fit_poisson() {
        let lambda = 0.8;
        let d = DrivingStream::new(99, lambda).unwrap();
        let site = Site::new(vec![3]);
        let mut hist = [0u64; 5];
        let blocks = 10_000;
        for b in 0..blocks {
            let n = d.block(&site, b).arrivals.len();
            hist[n.min(4)] += 1;
        }
        let pois = Poisson::new(lambda).unwrap();
        let mut chi2 = 0.0;
        for (k, &obs) in hist.iter().enumerate() {
            let p = if k < 4 {
                pois.pmf(k as u64)
            } else {
                1.0 - (0..4).map(|j| pois.pmf(j)).sum::<f64>()
            };
            let expected = p * blocks as f64;
            chi2 += (obs as f64 - expected).powi(2) / expected;
        }
        let crit = ChiSquared::new(4.0).unwrap().inverse_cdf(1.0 - 1e-3);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn marks_are_uniform() {
        let d = DrivingStream::new(1234, 0.0).unwrap();
        let mut marks = Vec::new();
        let mut block = 0;
        while marks.len() < 100_000 {
            marks.extend(d.block(&Site::new(vec![0]), block).departures.iter().map(|(_, m)| m.value()));
            block += 1;
        }
        marks.sort_by(f64::total_cmp);
        let n = marks.len() as f64;
        let ks = marks
            .iter()
            .enumerate()
            .map(|(k, &u)| ((k as f64 + 1.0) / n - u).max(u - k as f64 / n))
            .fold(0.0, f64::max);
        // Asymptotic Kolmogorov critical value at level 1e-3: sqrt(-ln(5e-4)/2)/sqrt(n).
        let crit = (-(0.5e-3f64).ln() / 2.0).sqrt() / n.sqrt();
        assert!(ks < crit, "KS {ks} >= {crit}");
    }

    #[test]
    fn mark_conversion() {
        assert_eq!(Mark::from_f64(0.0).raw(), 0);
        assert!(Mark::from_f64(1.0).value() < 1.0);
        assert_eq!(Mark::from_f64(0.5).value(), 0.5);
    }
}
