//! Sites of `Z^d`, finite index sets and their neighbour tables.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::interference::{centered_residue, InterferenceSequence};

/// A point of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    /// `k` along the first axis, zero elsewhere.
    pub fn axis(dim: usize, k: i64) -> Self {
        let mut c = vec![0; dim];
        c[0] = k;
        Site(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn sup_norm(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs() as u32).max().unwrap_or(0)
    }

    pub fn neg(&self) -> Site {
        Site(self.0.iter().map(|c| -c).collect())
    }

    pub fn add(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// All sites within sup-distance `radius` of `center`, lexicographic.
    pub fn ball(center: &Site, radius: u32) -> Vec<Site> {
        let r = radius as i64;
        let lo: Vec<i64> = center.0.iter().map(|c| c - r).collect();
        let hi: Vec<i64> = center.0.iter().map(|c| c + r).collect();
        Self::cuboid(&lo, &hi)
    }

    /// Every site `s` with `lo <= s <= hi` coordinate-wise, lexicographic.
    pub fn cuboid(lo: &[i64], hi: &[i64]) -> Vec<Site> {
        let mut out = Vec::new();
        if lo.iter().zip(hi).any(|(l, h)| l > h) {
            return out;
        }
        let mut cur = lo.to_vec();
        loop {
            out.push(Site(cur.clone()));
            let mut axis = cur.len();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if cur[axis] < hi[axis] {
                    cur[axis] += 1;
                    for (k, c) in cur.iter_mut().enumerate().skip(axis + 1) {
                        *c = lo[k];
                    }
                    break;
                }
            }
        }
    }

    /// Injective code used to key random streams: zig-zag each coordinate,
    /// then fold with the Szudzik pairing. Injective while the folded value
    /// fits in 64 bits (|coordinate| < 2^15 in three dimensions).
    pub fn stream_code(&self) -> u64 {
        let zig = |v: i64| -> u64 { ((v << 1) ^ (v >> 63)) as u64 };
        self.0.iter().fold(self.0.len() as u64, |acc, &c| {
            let (x, y) = (acc, zig(c));
            if x >= y {
                x.wrapping_mul(x).wrapping_add(x).wrapping_add(y)
            } else {
                y.wrapping_mul(y).wrapping_add(x)
            }
        })
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            return write!(f, "{}", self.0[0]);
        }
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Shape of a finite index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// `B_n = [-n, n]^d` with wrap-around neighbour arithmetic.
    Torus { n: u32 },
    /// `B_n` with every outside queue pinned to zero.
    Box { n: u32 },
    /// An arbitrary finite set; outside queues are zero.
    Explicit(Vec<Site>),
}

/// Error raised when a region cannot host a given interference sequence.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("torus half-width {n} too small for interference radius {radius}")]
    TorusTooSmall { n: u32, radius: u32 },
    #[error("site {0} has the wrong dimension")]
    DimensionMismatch(Site),
}

/// A finite index set together with its interference neighbour table.
///
/// Sites are stored in lexicographic order, so positions double as the
/// deterministic tie-break order for simultaneous events.
#[derive(Debug, Clone)]
pub struct Lattice {
    region: Region,
    dim: usize,
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    /// CSR neighbour table: for site `i`, entries `starts[i]..starts[i+1]`
    /// hold `(neighbour position, offset position in the sequence)` with
    /// neighbour = i - offset.
    starts: Vec<u32>,
    entries: Vec<(u32, u32)>,
}

impl Lattice {
    pub fn new(dim: usize, region: Region, seq: &InterferenceSequence) -> Result<Self, LatticeError> {
        let sites = match &region {
            Region::Torus { n } => {
                if 2 * n + 1 <= 2 * seq.radius() {
                    return Err(LatticeError::TorusTooSmall {
                        n: *n,
                        radius: seq.radius(),
                    });
                }
                Site::ball(&Site::origin(dim), *n)
            }
            Region::Box { n } => Site::ball(&Site::origin(dim), *n),
            Region::Explicit(list) => {
                let mut v = list.clone();
                if let Some(bad) = v.iter().find(|s| s.dim() != dim) {
                    return Err(LatticeError::DimensionMismatch(bad.clone()));
                }
                v.sort();
                v.dedup();
                v
            }
        };
        let index: HashMap<Site, usize> = sites.iter().cloned().enumerate().map(|(k, s)| (s, k)).collect();
        let mut starts = Vec::with_capacity(sites.len() + 1);
        let mut entries = Vec::new();
        starts.push(0);
        for site in &sites {
            for (k, offset) in seq.offsets().iter().enumerate() {
                let raw = site.sub(offset);
                let neighbour = match &region {
                    Region::Torus { n } => {
                        let m = 2 * *n as i64 + 1;
                        let wrapped = Site(raw.0.iter().map(|&c| centered_residue(c, m)).collect());
                        index.get(&wrapped).copied()
                    }
                    _ => index.get(&raw).copied(),
                };
                if let Some(p) = neighbour {
                    entries.push((p as u32, k as u32));
                }
            }
            starts.push(entries.len() as u32);
        }
        Ok(Self {
            region,
            dim,
            sites,
            index,
            starts,
            entries,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn position(&self, site: &Site) -> Option<usize> {
        self.index.get(site).copied()
    }

    /// `(neighbour position, offset position)` pairs feeding site `pos`.
    #[inline]
    pub fn neighbours(&self, pos: usize) -> &[(u32, u32)] {
        &self.entries[self.starts[pos] as usize..self.starts[pos + 1] as usize]
    }

    /// Position of `site + shift` under this region's geometry, if present.
    pub fn shifted(&self, site: &Site, shift: &Site) -> Option<usize> {
        let raw = site.add(shift);
        match &self.region {
            Region::Torus { n } => {
                let m = 2 * *n as i64 + 1;
                self.position(&Site(raw.0.iter().map(|&c| centered_residue(c, m)).collect()))
            }
            _ => self.position(&raw),
        }
    }
}
