//! Fluid-limit ODE on a window `[-N, N]`:
//! `y_i' = lambda - y_i / sum_j a_{i-j} y_j` for `y_i > 0`, `lambda` at `y_i = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interference::InterferenceSequence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("fluid model is one-dimensional, got dimension {0}")]
    NotOneDimensional(usize),
    #[error("state length {len} is not 2N+1")]
    BadLength { len: usize },
    #[error("step too large at t={t}: coordinate {index} changed from {from} to {to}")]
    StepTooLarge { t: f64, index: i64, from: f64, to: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    /// Half-width `N`.
    pub n: usize,
    /// `y[k]` is the coordinate at `k - N`.
    pub y: Vec<f64>,
    pub t: f64,
}

impl FluidState {
    pub fn new(y: Vec<f64>, t: f64) -> Result<Self, FluidError> {
        if y.len() % 2 == 0 {
            return Err(FluidError::BadLength { len: y.len() });
        }
        Ok(Self { n: y.len() / 2, y, t })
    }

    /// `(N + 1 - |i|) / (N + 1) * peak`: strictly unimodal and positive.
    pub fn tent(n: usize, peak: f64) -> Self {
        let y = (0..2 * n + 1)
            .map(|k| {
                let i = (k as i64 - n as i64).unsigned_abs() as f64;
                peak * (n as f64 + 1.0 - i) / (n as f64 + 1.0)
            })
            .collect();
        Self { n, y, t: 0.0 }
    }

    pub fn at(&self, i: i64) -> f64 {
        let k = i + self.n as i64;
        if k < 0 || k as usize >= self.y.len() {
            0.0
        } else {
            self.y[k as usize]
        }
    }

    pub fn mass(&self) -> f64 {
        self.y.iter().sum()
    }
}

/// Dense one-dimensional kernel: `w[r + L] = a_r`.
#[derive(Debug, Clone)]
struct Kernel {
    radius: usize,
    w: Vec<f64>,
    total: f64,
}

impl Kernel {
    fn new(seq: &InterferenceSequence) -> Result<Self, FluidError> {
        if seq.dim() != 1 {
            return Err(FluidError::NotOneDimensional(seq.dim()));
        }
        let radius = seq.radius() as usize;
        let mut w = vec![0.0; 2 * radius + 1];
        for (offset, &a) in seq.offsets().iter().zip(seq.weights()) {
            w[(offset.coords()[0] + radius as i64) as usize] = a;
        }
        Ok(Self {
            radius,
            total: seq.total(),
            w,
        })
    }

    /// `sum_j a_j y_{i-j}` with zero outside the window.
    #[inline]
    fn interference(&self, y: &[f64], k: usize) -> f64 {
        let l = self.radius as i64;
        let mut s = 0.0;
        for r in -l..=l {
            let q = k as i64 - r;
            if q >= 0 && (q as usize) < y.len() {
                s += self.w[(r + l) as usize] * y[q as usize];
            }
        }
        s
    }

    fn rhs(&self, y: &[f64], lambda: f64, out: &mut [f64]) {
        for k in 0..y.len() {
            out[k] = if y[k] > 0.0 {
                lambda - y[k] / self.interference(y, k)
            } else {
                lambda
            };
        }
    }
}

/// Right-hand side of the fluid ODE.
pub fn fluid_rhs(state: &FluidState, lambda: f64, seq: &InterferenceSequence) -> Result<Vec<f64>, FluidError> {
    let kernel = Kernel::new(seq)?;
    let mut out = vec![0.0; state.y.len()];
    kernel.rhs(&state.y, lambda, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub lambda: f64,
    pub step: f64,
    pub samples: Vec<FluidState>,
    /// `J` at each sample.
    pub lyapunov: Vec<f64>,
}

impl Trajectory {
    /// CSV rows `t, y_{-N}..y_N, J` with a header.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("t");
        if let Some(first) = self.samples.first() {
            for k in 0..first.y.len() {
                let _ = write!(out, ",y{}", k as i64 - first.n as i64);
            }
        }
        out.push_str(",J\n");
        for (s, j) in self.samples.iter().zip(&self.lyapunov) {
            let _ = write!(out, "{}", s.t);
            for v in &s.y {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{j}");
        }
        out
    }
}

/// Smallest coordinate size one step of length `step` can resolve:
/// `step * (lambda + 1/a_0)` bounds how far a coordinate moves per step.
pub fn resolution_floor(seq: &InterferenceSequence, lambda: f64, step: f64) -> f64 {
    step * (lambda + 1.0 / seq.center())
}

/// Classical RK4 with post-stage clamping to `[0, inf)`, sampled every
/// `sample_every` time units (and at `t = 0`).
pub fn integrate(
    initial: &FluidState,
    lambda: f64,
    seq: &InterferenceSequence,
    step: f64,
    horizon: f64,
    sample_every: f64,
) -> Result<Trajectory, FluidError> {
    if !(step > 0.0) || !(horizon >= 0.0) || !(sample_every >= step) {
        return Err(FluidError::InvalidParameter("need step > 0, horizon >= 0 and sample_every >= step"));
    }
    if initial.y.iter().any(|&v| v < 0.0) {
        return Err(FluidError::InvalidParameter("fluid entries must be nonnegative"));
    }
    let kernel = Kernel::new(seq)?;
    let len = initial.y.len();
    let steps = (horizon / step).round() as u64;
    let per_sample = ((sample_every / step).round() as u64).max(1);
    let floor = resolution_floor(seq, lambda, step);

    let mut y = initial.y.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    let mut samples = vec![FluidState {
        n: initial.n,
        y: y.clone(),
        t: initial.t,
    }];
    for s in 1..=steps {
        kernel.rhs(&y, lambda, &mut k1);
        stage(&y, &k1, 0.5 * step, &mut tmp);
        kernel.rhs(&tmp, lambda, &mut k2);
        stage(&y, &k2, 0.5 * step, &mut tmp);
        kernel.rhs(&tmp, lambda, &mut k3);
        stage(&y, &k3, step, &mut tmp);
        kernel.rhs(&tmp, lambda, &mut k4);
        let t = initial.t + s as f64 * step;
        for k in 0..len {
            let next = (y[k] + step / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])).max(0.0);
            // coordinates in or entering the band below `floor` may legitimately
            // drain to zero within one step
            let jump = y[k] > floor && next > floor && (next - y[k]).abs() > 0.5 * y[k];
            if jump || !next.is_finite() {
                return Err(FluidError::StepTooLarge {
                    t,
                    index: k as i64 - initial.n as i64,
                    from: y[k],
                    to: next,
                });
            }
            y[k] = next;
        }
        if s % per_sample == 0 || s == steps {
            samples.push(FluidState { n: initial.n, y: y.clone(), t });
        }
    }
    let lyapunov = samples.iter().map(|st| lyapunov_value(&kernel, &st.y)).collect();
    Ok(Trajectory {
        lambda,
        step,
        samples,
        lyapunov,
    })
}

fn stage(y: &[f64], k: &[f64], h: f64, out: &mut [f64]) {
    for i in 0..y.len() {
        out[i] = (y[i] + h * k[i]).max(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unimodality {
    Strict,
    Weak,
    None,
}

/// Shape classification with relative symmetry tolerance `1e-9`.
pub fn unimodality(state: &FluidState) -> Unimodality {
    unimodality_within(state, 1e-9, 0.0)
}

/// As [`unimodality`], but weak monotonicity and nonnegativity may fail by
/// up to `slack` (absolute) to absorb integrator error.
pub fn unimodality_within(state: &FluidState, symmetry_rel: f64, slack: f64) -> Unimodality {
    let n = state.n as i64;
    let symmetric = (1..=n).all(|i| {
        let (a, b) = (state.at(i), state.at(-i));
        (a - b).abs() <= symmetry_rel * a.abs().max(b.abs()) + slack
    });
    if !symmetric {
        return Unimodality::None;
    }
    let strict = (0..n).all(|i| state.at(i) > state.at(i + 1)) && state.y.iter().all(|&v| v > 0.0);
    if strict {
        return Unimodality::Strict;
    }
    let weak = (0..n).all(|i| state.at(i) + slack >= state.at(i + 1)) && state.y.iter().all(|&v| v >= -slack);
    if weak {
        Unimodality::Weak
    } else {
        Unimodality::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// `J = sum_i y_i sum_j a_j y_{i+j}`.
    pub j: f64,
    /// `(4(3 lambda - 1) N - 2 lambda) y_N`, stated for width-3 ones.
    pub slope_bound_width3: f64,
    /// `(4(3 lambda - 1) N + 2 lambda - 2) y_N`, the bound that follows from
    /// `dJ/dt = 2(3 lambda - 1) sum y - 4 lambda y_N` and `sum y >= (2N+1) y_N`.
    pub slope_bound_width3_derived: f64,
    /// `2((lambda sum a - 1) floor(N/L) - 2 sum a) sum_{j=N-L}^{N} y_j`.
    pub slope_bound_general: f64,
}

fn lyapunov_value(kernel: &Kernel, y: &[f64]) -> f64 {
    (0..y.len()).map(|k| y[k] * kernel.interference(y, k)).sum()
}

pub fn lyapunov(state: &FluidState, seq: &InterferenceSequence, lambda: f64) -> Result<LyapunovReport, FluidError> {
    let kernel = Kernel::new(seq)?;
    let n = state.n as f64;
    let y_n = state.at(state.n as i64);
    let l = kernel.radius.max(1);
    let tail: f64 = (state.n.saturating_sub(l)..=state.n).map(|j| state.at(j as i64)).sum();
    Ok(LyapunovReport {
        j: lyapunov_value(&kernel, &state.y),
        slope_bound_width3: (4.0 * (3.0 * lambda - 1.0) * n - 2.0 * lambda) * y_n,
        slope_bound_width3_derived: (4.0 * (3.0 * lambda - 1.0) * n + 2.0 * lambda - 2.0) * y_n,
        slope_bound_general: 2.0 * ((lambda * kernel.total - 1.0) * (state.n / l) as f64 - 2.0 * kernel.total) * tail,
    })
}

/// Exact `dJ/dt` at a state with every coordinate positive.
pub fn lyapunov_derivative(state: &FluidState, seq: &InterferenceSequence, lambda: f64) -> Result<f64, FluidError> {
    let kernel = Kernel::new(seq)?;
    let mut d = vec![0.0; state.y.len()];
    kernel.rhs(&state.y, lambda, &mut d);
    Ok(2.0 * (0..state.y.len()).map(|k| d[k] * kernel.interference(&state.y, k)).sum::<f64>())
}

/// Outcome of the checks on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidVerdict {
    pub unimodality_ok: bool,
    pub j_monotone: bool,
    pub slope_bound_ok: bool,
    /// Smallest `(finite-difference slope) - (bound at earlier sample)`.
    pub worst_slope_margin: f64,
    pub first_failure_time: Option<f64>,
}

/// Checks weak unimodality (within `slack`), monotonicity of `J` and the
/// width-3 slope bound (within `slope_tol`) along a trajectory.
pub fn check_supercritical(traj: &Trajectory, seq: &InterferenceSequence, slack: f64, slope_tol: f64) -> Result<FluidVerdict, FluidError> {
    let mut verdict = FluidVerdict {
        unimodality_ok: true,
        j_monotone: true,
        slope_bound_ok: true,
        worst_slope_margin: f64::INFINITY,
        first_failure_time: None,
    };
    let fail = |v: &mut FluidVerdict, t: f64| {
        if v.first_failure_time.is_none() {
            v.first_failure_time = Some(t);
        }
    };
    for (k, s) in traj.samples.iter().enumerate() {
        if unimodality_within(s, 1e-9, slack) == Unimodality::None {
            verdict.unimodality_ok = false;
            fail(&mut verdict, s.t);
        }
        if k == 0 {
            continue;
        }
        let prev = &traj.samples[k - 1];
        let dj = traj.lyapunov[k] - traj.lyapunov[k - 1];
        if dj < 0.0 {
            verdict.j_monotone = false;
            fail(&mut verdict, s.t);
        }
        let slope = dj / (s.t - prev.t);
        let margin = slope - lyapunov(prev, seq, traj.lambda)?.slope_bound_width3;
        verdict.worst_slope_margin = verdict.worst_slope_margin.min(margin);
        if margin < -slope_tol {
            verdict.slope_bound_ok = false;
            fail(&mut verdict, s.t);
        }
    }
    Ok(verdict)
}

/// Largest sup-norm gap between samples of two trajectories at matching times.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for sa in &a.samples {
        if let Some(sb) = b.samples.iter().find(|s| (s.t - sa.t).abs() < 1e-9) {
            for (x, y) in sa.y.iter().zip(&sb.y) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}
