//! Interference sequences and the closed-form scalars derived from them.
//!
//! An interference sequence assigns a nonnegative weight `a_i` to every
//! offset `i` in `Z^d`. The weights are symmetric (`a_i = a_{-i}`), finitely
//! supported and strictly positive at the origin. Queue `i` is served at rate
//! `x_i / sum_j a_j x_{i-j}`, so the sequence fully determines how neighbours
//! slow each other down.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Site;

/// Weight attached to a single offset.
///
/// Rational weights keep the departure test exact (integer
/// cross-multiplication); float weights fall back to binary64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Exact(Ratio<i64>),
    Float(f64),
}

impl Weight {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Weight::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            Weight::Float(v) => v,
        }
    }

    fn is_negative(&self) -> bool {
        match *self {
            Weight::Exact(r) => r < Ratio::from_integer(0),
            Weight::Float(v) => v < 0.0,
        }
    }

    fn is_zero(&self) -> bool {
        match *self {
            Weight::Exact(r) => r == Ratio::from_integer(0),
            Weight::Float(v) => v == 0.0,
        }
    }

    /// Parses `"1"`, `"0.25"`, `"1/3"` as exact rationals; anything else that
    /// parses as a float (e.g. `"1e-3"`) becomes a float weight.
    pub fn parse(text: &str) -> Option<Weight> {
        let text = text.trim();
        if let Some((num, den)) = text.split_once('/') {
            let num: i64 = num.trim().parse().ok()?;
            let den: i64 = den.trim().parse().ok()?;
            if den <= 0 {
                return None;
            }
            return Some(Weight::Exact(Ratio::new(num, den)));
        }
        if let Some(r) = parse_decimal(text) {
            return Some(Weight::Exact(r));
        }
        let v: f64 = text.parse().ok()?;
        v.is_finite().then_some(Weight::Float(v))
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Exact(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Weight::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Weight::Float(v) => write!(f, "{v}"),
        }
    }
}

fn parse_decimal(text: &str) -> Option<Ratio<i64>> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if frac_part.contains('.') || frac_part.len() > 12 {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let denom = 10i64.checked_pow(frac_part.len() as u32)?;
    let r = Ratio::new(numer, denom);
    Some(if neg { -r } else { r })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterferenceError {
    #[error("asymmetric interference: weight at {offset} differs from its mirror")]
    Asymmetric { offset: Site },
    #[error("weight at the zero offset must be positive")]
    NonpositiveCenter,
    #[error("negative weight at offset {offset}")]
    NegativeWeight { offset: Site },
    #[error("offset {offset} does not have dimension {dim}")]
    DimensionMismatch { offset: Site, dim: usize },
    #[error("arrival rate {lambda} is not below the critical rate {critical}")]
    Supercritical { lambda: f64, critical: f64 },
    #[error("arrival rate {lambda} is not below the second-moment threshold {threshold}")]
    AboveThreshold { lambda: f64, threshold: f64 },
    #[error("no off-center interference: the second-moment bound does not apply")]
    Degenerate,
    #[error("torus half-width {n} too small for interference radius {radius}")]
    TorusTooSmall { n: u32, radius: u32 },
    #[error("unknown interference preset `{0}`")]
    UnknownPreset(String),
}

/// Integer numerators over a common denominator, aligned with
/// [`InterferenceSequence::offsets`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactWeights {
    pub numerators: Vec<u64>,
    pub denominator: u64,
}

/// A validated, immutable interference sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSequence {
    dim: usize,
    /// Positive-weight offsets in lexicographic order.
    offsets: Vec<Site>,
    weights: Vec<f64>,
    exact: Option<ExactWeights>,
    center: f64,
    total: f64,
    radius: u32,
}

/// Output of [`InterferenceSequence::second_moment_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentBound {
    pub c: f64,
    pub threshold: f64,
    pub bound: f64,
}

impl InterferenceSequence {
    /// Validates a raw weight map. Zero weights are dropped; symmetry is
    /// checked on the remaining entries.
    pub fn validate<I>(dim: usize, raw: I) -> Result<Self, InterferenceError>
    where
        I: IntoIterator<Item = (Site, Weight)>,
    {
        let mut map: BTreeMap<Site, Weight> = BTreeMap::new();
        for (offset, w) in raw {
            if offset.dim() != dim {
                return Err(InterferenceError::DimensionMismatch { offset, dim });
            }
            if w.is_negative() {
                return Err(InterferenceError::NegativeWeight { offset });
            }
            if let Weight::Float(v) = w {
                if !v.is_finite() {
                    return Err(InterferenceError::NegativeWeight { offset });
                }
            }
            map.insert(offset, w);
        }
        map.retain(|_, w| !w.is_zero());

        let zero = Site::origin(dim);
        if !map.contains_key(&zero) {
            return Err(InterferenceError::NonpositiveCenter);
        }
        for (offset, w) in &map {
            let mirrored = map.get(&offset.neg());
            let symmetric = match (w, mirrored) {
                (Weight::Exact(a), Some(Weight::Exact(b))) => a == b,
                (a, Some(b)) => a.as_f64() == b.as_f64(),
                (_, None) => false,
            };
            if !symmetric {
                return Err(InterferenceError::Asymmetric {
                    offset: offset.clone(),
                });
            }
        }

        let offsets: Vec<Site> = map.keys().cloned().collect();
        let weights: Vec<f64> = map.values().map(Weight::as_f64).collect();
        let exact = exact_weights(map.values());
        let center = map[&zero].as_f64();
        let total = weights.iter().sum();
        let radius = offsets.iter().map(Site::sup_norm).max().unwrap_or(0);
        Ok(Self {
            dim,
            offsets,
            weights,
            exact,
            center,
            total,
            radius,
        })
    }

    /// `a_i = 1` for every offset of sup-norm at most `radius`.
    pub fn ones(dim: usize, radius: u32) -> Self {
        let entries = Site::ball(&Site::origin(dim), radius)
            .into_iter()
            .map(|s| (s, Weight::Exact(Ratio::from_integer(1))));
        Self::validate(dim, entries).expect("uniform weights are valid")
    }

    /// `a_i = ratio^{|i|_inf}` truncated at `radius`.
    pub fn geometric(dim: usize, ratio: Weight, radius: u32) -> Result<Self, InterferenceError> {
        let entries = Site::ball(&Site::origin(dim), radius).into_iter().map(|s| {
            let k = s.sup_norm() as i32;
            let w = match ratio {
                Weight::Exact(r) => match checked_pow(r, k) {
                    Some(p) => Weight::Exact(p),
                    None => Weight::Float(ratio.as_f64().powi(k)),
                },
                Weight::Float(v) => Weight::Float(v.powi(k)),
            };
            (s, w)
        });
        Self::validate(dim, entries)
    }

    /// Named presets used by configuration files: `ones(width)` and
    /// `geometric(ratio, radius)`. `width` must be odd.
    pub fn preset(dim: usize, text: &str) -> Result<Self, InterferenceError> {
        let unknown = || InterferenceError::UnknownPreset(text.to_string());
        let text = text.trim();
        let (name, args) = text
            .strip_suffix(')')
            .and_then(|t| t.split_once('('))
            .ok_or_else(unknown)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        match (name.trim(), args.as_slice()) {
            ("ones", [width]) => {
                let width: u32 = width.parse().map_err(|_| unknown())?;
                if width % 2 == 0 {
                    return Err(unknown());
                }
                Ok(Self::ones(dim, width / 2))
            }
            ("geometric", [ratio, radius]) => {
                let ratio = Weight::parse(ratio).ok_or_else(unknown)?;
                let radius: u32 = radius.parse().map_err(|_| unknown())?;
                Self::geometric(dim, ratio, radius)
            }
            _ => Err(unknown()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &[Site] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact(&self) -> Option<&ExactWeights> {
        self.exact.as_ref()
    }

    pub fn weight(&self, offset: &Site) -> f64 {
        self.offsets
            .binary_search(offset)
            .map(|k| self.weights[k])
            .unwrap_or(0.0)
    }

    /// `a_0`.
    pub fn center(&self) -> f64 {
        self.center
    }

    /// `sum_j a_j`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `sum_{j != 0} a_j`.
    pub fn off_center_total(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.offsets)
            .filter(|(_, o)| !o.is_origin())
            .map(|(w, _)| w)
            .sum()
    }

    /// Largest sup-norm among positive-weight offsets.
    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// True iff the support generates `Z^d` as a group.
    pub fn is_irreducible(&self) -> bool {
        let vectors: Vec<Vec<i128>> = self
            .offsets
            .iter()
            .filter(|o| !o.is_origin())
            .map(|o| o.coords().iter().map(|&c| c as i128).collect())
            .collect();
        lattice_is_full(self.dim, vectors)
    }

    /// `1 / sum_j a_j`.
    pub fn critical_rate(&self) -> f64 {
        1.0 / self.total
    }

    fn check_subcritical(&self, lambda: f64) -> Result<(), InterferenceError> {
        if lambda * self.total >= 1.0 {
            return Err(InterferenceError::Supercritical {
                lambda,
                critical: self.critical_rate(),
            });
        }
        Ok(())
    }

    /// Stationary mean of the minimal solution, `lambda a_0 / (1 - lambda sum_j a_j)`.
    pub fn closed_form_mean(&self, lambda: f64) -> Result<f64, InterferenceError> {
        self.check_subcritical(lambda)?;
        Ok(lambda * self.center / (1.0 - lambda * self.total))
    }

    /// Constant `c`, admissibility threshold and the torus second-moment bound
    /// `2 mu (lambda + lambda S + 1) / (2(1+c) - 3 lambda S)`.
    pub fn second_moment_bound(&self, lambda: f64) -> Result<SecondMomentBound, InterferenceError> {
        let off = self.off_center_total();
        if off <= 0.0 {
            return Err(InterferenceError::Degenerate);
        }
        let a0 = self.center;
        let c = ((a0 * a0 + a0 * off).sqrt() - a0) / off;
        let threshold = 2.0 / 3.0 * (1.0 + c) / self.total;
        if lambda >= threshold {
            return Err(InterferenceError::AboveThreshold { lambda, threshold });
        }
        let mu = self.closed_form_mean(lambda)?;
        let s = self.total;
        let bound = 2.0 * mu * (lambda + lambda * s + 1.0) / (2.0 * (1.0 + c) - 3.0 * lambda * s);
        Ok(SecondMomentBound { c, threshold, bound })
    }

    /// Mean bound for the dynamics reflected at level `K`: `(lambda + K) / (1 - lambda S)`.
    pub fn k_shifted_mean_bound(&self, lambda: f64, shift: u64) -> Result<f64, InterferenceError> {
        self.check_subcritical(lambda)?;
        Ok((lambda + shift as f64) / (1.0 - lambda * self.total))
    }

    /// Drops every offset with sup-norm above `radius`.
    pub fn truncate(&self, radius: u32) -> Self {
        let keep: Vec<usize> = (0..self.offsets.len())
            .filter(|&k| self.offsets[k].sup_norm() <= radius)
            .collect();
        let offsets: Vec<Site> = keep.iter().map(|&k| self.offsets[k].clone()).collect();
        let weights: Vec<f64> = keep.iter().map(|&k| self.weights[k]).collect();
        let exact = self.exact.as_ref().map(|e| {
            let nums: Vec<u64> = keep.iter().map(|&k| e.numerators[k]).collect();
            reduce_exact(nums, e.denominator)
        });
        let total = weights.iter().sum();
        let new_radius = offsets.iter().map(Site::sup_norm).max().unwrap_or(0);
        Self {
            dim: self.dim,
            offsets,
            weights,
            exact,
            center: self.center,
            total,
            radius: new_radius,
        }
    }

    /// Offset between torus sites `i` and `j` of `B_n`, as the centered residue
    /// modulo `2n + 1` in every coordinate.
    pub fn torus_displacement(&self, i: &Site, j: &Site, n: u32) -> Result<Site, InterferenceError> {
        if 2 * n + 1 <= 2 * self.radius {
            return Err(InterferenceError::TorusTooSmall {
                n,
                radius: self.radius,
            });
        }
        Ok(torus_displacement(i, j, n))
    }
}

/// Coordinate-wise centered residue of `i - j` modulo `2n + 1`.
pub fn torus_displacement(i: &Site, j: &Site, n: u32) -> Site {
    let m = 2 * n as i64 + 1;
    Site::new(
        i.coords()
            .iter()
            .zip(j.coords())
            .map(|(&a, &b)| centered_residue(a - b, m))
            .collect(),
    )
}

/// Representative of `v mod m` in `[-(m-1)/2, (m-1)/2]` for odd `m`.
pub fn centered_residue(v: i64, m: i64) -> i64 {
    let half = (m - 1) / 2;
    (v + half).rem_euclid(m) - half
}

fn checked_pow(r: Ratio<i64>, k: i32) -> Option<Ratio<i64>> {
    let mut acc = Ratio::from_integer(1i64);
    for _ in 0..k {
        let n = acc.numer().checked_mul(*r.numer())?;
        let d = acc.denom().checked_mul(*r.denom())?;
        acc = Ratio::new(n, d);
    }
    Some(acc)
}

fn exact_weights<'a>(weights: impl Iterator<Item = &'a Weight> + Clone) -> Option<ExactWeights> {
    let mut denom: u64 = 1;
    for w in weights.clone() {
        match w {
            Weight::Exact(r) => denom = denom.lcm(&(*r.denom() as u64)),
            Weight::Float(_) => return None,
        }
        if denom > 1 << 32 {
            return None;
        }
    }
    let numerators = weights
        .map(|w| match w {
            Weight::Exact(r) => (*r.numer() as u64).checked_mul(denom / *r.denom() as u64),
            Weight::Float(_) => None,
        })
        .collect::<Option<Vec<u64>>>()?;
    if numerators.iter().any(|&n| n > 1 << 32) {
        return None;
    }
    Some(ExactWeights {
        numerators,
        denominator: denom,
    })
}

fn reduce_exact(numerators: Vec<u64>, denominator: u64) -> ExactWeights {
    let g = numerators.iter().fold(denominator, |g, &n| g.gcd(&n));
    ExactWeights {
        numerators: numerators.into_iter().map(|n| n / g).collect(),
        denominator: denominator / g,
    }
}

/// Integer row reduction: the vectors generate `Z^dim` iff the echelon form
/// has `dim` pivots of absolute value one.
fn lattice_is_full(dim: usize, mut rows: Vec<Vec<i128>>) -> bool {
    let mut pivot_row = 0;
    for col in 0..dim {
        // Euclid on column `col` among rows pivot_row.. until one nonzero remains.
        loop {
            let mut best: Option<usize> = None;
            for r in pivot_row..rows.len() {
                if rows[r][col] != 0 && best.is_none_or(|b| rows[r][col].abs() < rows[b][col].abs()) {
                    best = Some(r);
                }
            }
            let Some(b) = best else { return false };
            rows.swap(pivot_row, b);
            let mut reduced = true;
            for r in pivot_row + 1..rows.len() {
                let q = rows[r][col].div_euclid(rows[pivot_row][col]);
                if q != 0 {
                    for c in col..dim {
                        rows[r][c] -= q * rows[pivot_row][c];
                    }
                }
                if rows[r][col] != 0 {
                    reduced = false;
                }
            }
            if reduced {
                break;
            }
        }
        if rows[pivot_row][col].abs() != 1 {
            return false;
        }
        pivot_row += 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(c: &[i64]) -> Site {
        Site::new(c.to_vec())
    }

    fn one() -> Weight {
        Weight::Exact(Ratio::from_integer(1))
    }

    fn seq1(entries: &[(i64, Weight)]) -> Result<InterferenceSequence, InterferenceError> {
        InterferenceSequence::validate(1, entries.iter().map(|&(o, w)| (s(&[o]), w)))
    }

    #[test]
    fn validate_examples() {
        let a = seq1(&[(-1, one()), (0, one()), (1, one())]).unwrap();
        assert_eq!(a.radius(), 1);
        assert_eq!(a.total(), 3.0);

        let err = seq1(&[(0, one()), (1, one())]).unwrap_err();
        assert_eq!(err, InterferenceError::Asymmetric { offset: s(&[1]) });

        let b = seq1(&(-3..=3).map(|o| (o, one())).collect::<Vec<_>>()).unwrap();
        assert_eq!(b.radius(), 3);
        assert_eq!(b.total(), 7.0);
    }

    #[test]
    fn validate_rejects_bad_center_and_negative() {
        assert_eq!(
            seq1(&[(-1, one()), (1, one())]).unwrap_err(),
            InterferenceError::NonpositiveCenter
        );
        assert_eq!(
            seq1(&[(0, Weight::Float(0.0))]).unwrap_err(),
            InterferenceError::NonpositiveCenter
        );
        assert!(matches!(
            seq1(&[(0, one()), (1, Weight::Float(-0.5)), (-1, Weight::Float(-0.5))]),
            Err(InterferenceError::NegativeWeight { .. })
        ));
    }

    #[test]
    fn general_center_is_accepted() {
        let a = seq1(&[(0, Weight::Exact(Ratio::from_integer(2)))]).unwrap();
        assert_eq!(a.center(), 2.0);
        assert_eq!(a.critical_rate(), 0.5);
    }

    #[test]
    fn irreducibility() {
        let a = InterferenceSequence::ones(1, 1);
        assert!(a.is_irreducible());
        let even = seq1(&[(-2, one()), (0, one()), (2, one())]).unwrap();
        assert!(!even.is_irreducible());
        assert!(InterferenceSequence::ones(2, 1).is_irreducible());
        let cross = InterferenceSequence::validate(
            2,
            [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]].iter().map(|c| (s(c), one())),
        )
        .unwrap();
        assert!(cross.is_irreducible());
        // (1,1) and (1,-1) generate the checkerboard sublattice only.
        let diag = InterferenceSequence::validate(
            2,
            [[0, 0], [1, 1], [-1, -1], [1, -1], [-1, 1]].iter().map(|c| (s(c), one())),
        )
        .unwrap();
        assert!(!diag.is_irreducible());
        let mixed = seq1(&[(-3, one()), (-2, one()), (0, one()), (2, one()), (3, one())]).unwrap();
        assert!(mixed.is_irreducible());
    }

    #[test]
    fn critical_rates() {
        assert!((InterferenceSequence::ones(1, 1).critical_rate() - 1.0 / 3.0).abs() < 1e-15);
        assert!((InterferenceSequence::ones(1, 3).critical_rate() - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_mean_examples() {
        let w7 = InterferenceSequence::ones(1, 3);
        let m = w7.closed_form_mean(0.1419).unwrap();
        assert!((m - 21.18).abs() < 0.01, "{m}");
        let w3 = InterferenceSequence::ones(1, 1);
        assert_eq!(w3.closed_form_mean(0.0).unwrap(), 0.0);
        assert!((w3.closed_form_mean(0.25).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            w3.closed_form_mean(1.0 / 3.0),
            Err(InterferenceError::Supercritical { .. })
        ));
    }

    #[test]
    fn second_moment_bound_examples() {
        let w3 = InterferenceSequence::ones(1, 1);
        let b = w3.second_moment_bound(0.25).unwrap();
        assert!((b.c - (3f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!((b.threshold - 0.30357).abs() < 1e-5);
        // 2 * 1 * (0.25 + 0.75 + 1) / (2 * 1.3660254 - 0.75 * 3)
        assert!((b.bound - 8.297_88).abs() < 1e-5, "{}", b.bound);
        assert_eq!(w3.second_moment_bound(0.0).unwrap().bound, 0.0);
        assert!(matches!(
            w3.second_moment_bound(0.31),
            Err(InterferenceError::AboveThreshold { .. })
        ));
        let lone = seq1(&[(0, one())]).unwrap();
        assert_eq!(lone.second_moment_bound(0.1), Err(InterferenceError::Degenerate));
    }

    #[test]
    fn k_shifted_examples() {
        let w3 = InterferenceSequence::ones(1, 1);
        assert!((w3.k_shifted_mean_bound(0.25, 2).unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(
            w3.k_shifted_mean_bound(0.2, 0).unwrap(),
            w3.closed_form_mean(0.2).unwrap()
        );
        assert_eq!(w3.k_shifted_mean_bound(0.0, 5).unwrap(), 5.0);
    }

    #[test]
    fn truncation() {
        let half = Weight::Exact(Ratio::new(1, 2));
        let g = InterferenceSequence::geometric(1, half, 20).unwrap();
        let t0 = g.truncate(0);
        assert_eq!(t0.offsets(), &[s(&[0])]);
        assert_eq!(t0.total(), 1.0);
        assert_eq!(t0.exact().unwrap().denominator, 1);
        let w7 = InterferenceSequence::ones(1, 3);
        assert_eq!(w7.truncate(1), InterferenceSequence::ones(1, 1));
        assert_eq!(w7.truncate(3), w7);
        assert_eq!(w7.truncate(10), w7);
    }

    #[test]
    fn geometric_sum() {
        let half = Weight::Exact(Ratio::new(1, 2));
        let g = InterferenceSequence::geometric(1, half, 16).unwrap();
        assert!((g.total() - (3.0 - 2.0 * 0.5f64.powi(16))).abs() < 1e-15);
        assert_eq!(g.exact().unwrap().denominator, 1 << 16);
    }

    #[test]
    fn torus_displacement_examples() {
        let w3 = InterferenceSequence::ones(1, 1);
        assert_eq!(w3.torus_displacement(&s(&[2]), &s(&[-2]), 2).unwrap(), s(&[-1]));
        assert_eq!(w3.torus_displacement(&s(&[1]), &s(&[1]), 2).unwrap(), s(&[0]));
        assert_eq!(w3.torus_displacement(&s(&[-3]), &s(&[3]), 3).unwrap(), s(&[1]));
        assert!(matches!(
            InterferenceSequence::ones(1, 3).torus_displacement(&s(&[0]), &s(&[0]), 2),
            Err(InterferenceError::TorusTooSmall { .. })
        ));
    }

    #[test]
    fn presets_and_weight_parsing() {
        assert_eq!(
            InterferenceSequence::preset(1, "ones(7)").unwrap(),
            InterferenceSequence::ones(1, 3)
        );
        assert!(InterferenceSequence::preset(1, "ones(4)").is_err());
        let g = InterferenceSequence::preset(1, "geometric(0.5, 4)").unwrap();
        assert_eq!(g.weight(&s(&[4])), 1.0 / 16.0);
        assert!(g.exact().is_some());
        assert_eq!(Weight::parse("1/3"), Some(Weight::Exact(Ratio::new(1, 3))));
        assert_eq!(Weight::parse("0.25"), Some(Weight::Exact(Ratio::new(1, 4))));
        assert_eq!(Weight::parse("1e-3"), Some(Weight::Float(1e-3)));
        assert_eq!(Weight::parse("x"), None);
    }

    #[test]
    fn c_tends_to_half_as_off_center_mass_vanishes() {
        let mut prev = 0.0;
        for k in 1..12 {
            let eps = Weight::Exact(Ratio::new(1, 1 << (2 * k)));
            let seq = seq1(&[(-1, eps), (0, one()), (1, eps)]).unwrap();
            let c = seq.second_moment_bound(0.0).unwrap().c;
            assert!(c > 0.0 && c < 0.5);
            assert!(c > prev);
            prev = c;
        }
        assert!(0.5 - prev < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_seq() -> impl Strategy<Value = InterferenceSequence> {
            (1usize..=2, prop::collection::vec((0u32..=3, 0i64..=3, 1i64..=4), 1..5)).prop_map(
                |(dim, raw)| {
                    let mut entries = vec![(Site::origin(dim), Weight::Exact(Ratio::from_integer(1)))];
                    for (r, c, w) in raw {
                        let mut coords = vec![0i64; dim];
                        coords[0] = r as i64;
                        if dim > 1 {
                            coords[1] = c;
                        }
                        let o = Site::new(coords);
                        if o.is_origin() {
                            continue;
                        }
                        let w = Weight::Exact(Ratio::new(w, 2));
                        entries.push((o.neg(), w));
                        entries.push((o, w));
                    }
                    InterferenceSequence::validate(dim, entries).unwrap()
                },
            )
        }

        proptest! {
            #[test]
            fn mean_increases_in_lambda(seq in arb_seq()) {
                let crit = seq.critical_rate();
                let mut prev = -1.0;
                for k in 0..50 {
                    let lambda = crit * k as f64 / 50.0;
                    let m = seq.closed_form_mean(lambda).unwrap();
                    prop_assert!(m > prev);
                    prev = m;
                }
                prop_assert!(seq.closed_form_mean(crit * (1.0 - 1e-9)).unwrap() > 1e6);
            }

            #[test]
            fn displacement_antisymmetric(i in -5i64..=5, j in -5i64..=5, k in -5i64..=5, l in -5i64..=5, seq in arb_seq()) {
                let n = 5;
                let (a, b) = if seq.dim() == 1 {
                    (Site::new(vec![i]), Site::new(vec![j]))
                } else {
                    (Site::new(vec![i, k]), Site::new(vec![j, l]))
                };
                let d1 = torus_displacement(&a, &b, n);
                let d2 = torus_displacement(&b, &a, n);
                prop_assert_eq!(d1.neg(), d2.clone());
                prop_assert_eq!(seq.weight(&d1), seq.weight(&d2));
            }

            #[test]
            fn irreducibility_invariant_under_negation(seq in arb_seq()) {
                let negated = InterferenceSequence::validate(
                    seq.dim(),
                    seq.offsets().iter().zip(seq.weights()).map(|(o, &w)| (o.neg(), Weight::Float(w))),
                ).unwrap();
                prop_assert_eq!(seq.is_irreducible(), negated.is_irreducible());
            }

            #[test]
            fn c_in_open_unit_half(seq in arb_seq()) {
                if seq.off_center_total() > 0.0 {
                    let c = seq.second_moment_bound(0.0).unwrap().c;
                    prop_assert!(c > 0.0 && c < 0.5);
                }
            }
        }
    }
}
