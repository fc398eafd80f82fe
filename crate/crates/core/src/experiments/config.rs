//! Experiment configuration files.
//!
//! TOML with a handful of top-level keys and at most one section, named
//! after the experiment kind. Unknown keys anywhere are rejected.
//!
//! ```toml
//! kind = "mean-vs-formula"
//! lambda = 0.25
//! seeds = [0, 1, 2]
//! output_dir = "out/mean"
//!
//! [interference]
//! preset = "ones(3)"
//!
//! [mean-vs-formula]
//! n = 50
//! horizon = 2e5
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Count, InitialCondition};
use crate::interference::{InterferenceError, InterferenceSequence, Weight};
use crate::lattice::Site;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse(String),
    Semantic(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "PARSE_ERROR: cannot read {}: {message}", path.display()),
            ConfigError::Parse(m) => write!(f, "PARSE_ERROR: {m}"),
            ConfigError::Semantic(m) => write!(f, "SEMANTIC_ERROR: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn semantic<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Semantic(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MeanVsFormula,
    CovarianceFigure,
    MomentBounds,
    CouplingSuite,
    Loynes,
    LocalVsBox,
    FrozenWall,
    BoundedStartConvergence,
    SupercriticalGrowth,
    FluidTransience,
    InfiniteSupport,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::MeanVsFormula,
        ExperimentKind::CovarianceFigure,
        ExperimentKind::MomentBounds,
        ExperimentKind::CouplingSuite,
        ExperimentKind::Loynes,
        ExperimentKind::LocalVsBox,
        ExperimentKind::FrozenWall,
        ExperimentKind::BoundedStartConvergence,
        ExperimentKind::SupercriticalGrowth,
        ExperimentKind::FluidTransience,
        ExperimentKind::InfiniteSupport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MeanVsFormula => "mean-vs-formula",
            ExperimentKind::CovarianceFigure => "covariance-figure",
            ExperimentKind::MomentBounds => "moment-bounds",
            ExperimentKind::CouplingSuite => "coupling-suite",
            ExperimentKind::Loynes => "loynes",
            ExperimentKind::LocalVsBox => "local-vs-box",
            ExperimentKind::FrozenWall => "frozen-wall",
            ExperimentKind::BoundedStartConvergence => "bounded-start-convergence",
            ExperimentKind::SupercriticalGrowth => "supercritical-growth",
            ExperimentKind::FluidTransience => "fluid-transience",
            ExperimentKind::InfiniteSupport => "infinite-support",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A weight written as an integer, a float or a string such as `"1/3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl WeightValue {
    fn to_weight(&self) -> Option<Weight> {
        match self {
            WeightValue::Int(v) => Weight::parse(&v.to_string()),
            // shortest round-trip text, so 0.5 becomes the exact 1/2
            WeightValue::Float(v) => Weight::parse(&format!("{v}")),
            WeightValue::Text(t) => Weight::parse(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub offset: Vec<i64>,
    pub weight: WeightValue,
}

/// Either a named preset or an explicit list of `(offset, weight)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSpec {
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<WeightEntry>>,
}

fn one() -> usize {
    1
}

impl InterferenceSpec {
    pub fn build(&self) -> Result<InterferenceSequence, ConfigError> {
        let describe = |e: InterferenceError| ConfigError::Semantic(format!("interference: {e}"));
        match (&self.preset, &self.weights) {
            (Some(p), None) => InterferenceSequence::preset(self.dim, p).map_err(describe),
            (None, Some(list)) => {
                let mut raw = Vec::with_capacity(list.len());
                for e in list {
                    let w = e
                        .weight
                        .to_weight()
                        .ok_or_else(|| ConfigError::Semantic(format!("interference: unreadable weight {:?}", e.weight)))?;
                    raw.push((Site::new(e.offset.clone()), w));
                }
                InterferenceSequence::validate(self.dim, raw).map_err(describe)
            }
            _ => semantic("interference: give exactly one of `preset` or `weights`"),
        }
    }
}

/// Wall magnitude: `"infinite"` or a nonnegative integer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Magnitude {
    Finite(u64),
    Text(String),
}

impl Magnitude {
    pub fn count(&self) -> Result<Count, ConfigError> {
        match self {
            Magnitude::Finite(v) => Ok(Count::Finite(*v)),
            Magnitude::Text(t) if t.eq_ignore_ascii_case("infinite") => Ok(Count::Infinite),
            Magnitude::Text(t) => semantic(format!("frozen-wall: magnitude must be an integer or \"infinite\", got {t:?}")),
        }
    }
}

macro_rules! params {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $($(#[$fm])* pub $field: $ty,)*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }
    };
}

params!(MeanParams {
    /// Torus half-width; the torus has `2n+1` sites per axis.
    n: u32 = 50,
    burn_in: f64 = 2e4,
    horizon: f64 = 2e5,
    batches: usize = 30,
    /// Relative tolerance on the mean.
    tolerance: f64 = 0.03,
    /// Relative tolerance on the departure rate at the origin.
    rate_tolerance: f64 = 0.02,
    /// Half-width multiplier for residual checks.
    sd_multiplier: f64 = 3.0,
    lags: Vec<u32> = Vec::new(),
    initial: InitialCondition = InitialCondition::Zero,
});

params!(CovarianceParams {
    n: u32 = 25,
    burn_in: f64 = 2e4,
    horizon: f64 = 4e5,
    batches: usize = 30,
    tolerance: f64 = 0.10,
    /// Defaults to the closed-form mean.
    target_mean: Option<f64> = None,
    max_lag: u32 = 25,
    sd_multiplier: f64 = 3.0,
    initial: InitialCondition = InitialCondition::Zero,
});

params!(MomentParams {
    n: u32 = 50,
    burn_in: f64 = 2e4,
    horizon: f64 = 2e5,
    batches: usize = 30,
    shift: u64 = 2,
    floor_horizon: f64 = 1e4,
    sd_multiplier: f64 = 3.0,
});

params!(CouplingParams {
    n: u32 = 10,
    horizon: f64 = 500.0,
    upper_value: u64 = 5,
    suppress_radius: u32 = 3,
    suppress_window: [f64; 2] = [100.0, 300.0],
    min_events: u64 = 10_000,
});

params!(LoynesParams {
    n: u32 = 50,
    t0: f64 = 16.0,
    max_doublings: u32 = 7,
    boxes: Vec<u32> = vec![10, 20, 40],
    min_converged: f64 = 0.95,
});

params!(LocalParams {
    horizon: f64 = 5.0,
    safety: f64 = 0.9,
    /// Extra sites beyond `reach + L` in the oracle box.
    margin: u32 = 2,
    cluster_cap: usize = 1_000_000,
});

params!(FrozenParams {
    wall: u32 = 5,
    magnitude: Magnitude = Magnitude::Text("infinite".into()),
    adjacent_time: f64 = 1e4,
    checkpoints: Vec<f64> = vec![2e3, 1e4, 5e4],
    sd_multiplier: f64 = 3.0,
});

params!(BoundedParams {
    n: u32 = 50,
    burn_in: f64 = 2e4,
    horizon: f64 = 2e5,
    batches: usize = 30,
    high: u64 = 5,
    sd_multiplier: f64 = 3.0,
});

params!(GrowthParams {
    n: u32 = 50,
    horizon: f64 = 1e4,
    sample_every: f64 = 10.0,
    min_t_statistic: f64 = 10.0,
});

params!(FluidParams {
    /// Half-width `N` of the window.
    n: usize = 20,
    subcritical_lambda: f64 = 0.2,
    step: f64 = 1e-3,
    horizon: f64 = 50.0,
    subcritical_horizon: f64 = 200.0,
    sample_every: f64 = 0.1,
    peak: f64 = 1.0,
    drain_fraction: f64 = 1e-2,
    halving_tolerance: f64 = 1e-5,
    unimodality_slack: f64 = 1e-6,
    slope_tolerance: f64 = 1e-4,
    scales: Vec<f64> = vec![100.0, 400.0],
    scaling_horizon: f64 = 5.0,
    scaling_sample_every: f64 = 0.5,
});

params!(InfiniteParams {
    /// Truncation radii; paths are compared against the largest.
    radii: Vec<u32> = vec![8, 16],
    n: u32 = 50,
    horizon: f64 = 10.0,
    min_identical: f64 = 0.95,
    burn_in: f64 = 1e4,
    ergodic_horizon: f64 = 1e5,
    ergodic_seeds: usize = 5,
    batches: usize = 30,
    tolerance: f64 = 0.05,
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub lambda: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub interference: InterferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, rename = "mean-vs-formula", skip_serializing_if = "Option::is_none")]
    pub mean_vs_formula: Option<MeanParams>,
    #[serde(default, rename = "covariance-figure", skip_serializing_if = "Option::is_none")]
    pub covariance_figure: Option<CovarianceParams>,
    #[serde(default, rename = "moment-bounds", skip_serializing_if = "Option::is_none")]
    pub moment_bounds: Option<MomentParams>,
    #[serde(default, rename = "coupling-suite", skip_serializing_if = "Option::is_none")]
    pub coupling_suite: Option<CouplingParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loynes: Option<LoynesParams>,
    #[serde(default, rename = "local-vs-box", skip_serializing_if = "Option::is_none")]
    pub local_vs_box: Option<LocalParams>,
    #[serde(default, rename = "frozen-wall", skip_serializing_if = "Option::is_none")]
    pub frozen_wall: Option<FrozenParams>,
    #[serde(default, rename = "bounded-start-convergence", skip_serializing_if = "Option::is_none")]
    pub bounded_start_convergence: Option<BoundedParams>,
    #[serde(default, rename = "supercritical-growth", skip_serializing_if = "Option::is_none")]
    pub supercritical_growth: Option<GrowthParams>,
    #[serde(default, rename = "fluid-transience", skip_serializing_if = "Option::is_none")]
    pub fluid_transience: Option<FluidParams>,
    #[serde(default, rename = "infinite-support", skip_serializing_if = "Option::is_none")]
    pub infinite_support: Option<InfiniteParams>,
    /// File the config was read from, used in replay commands.
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// A config of the given kind with default parameters.
    pub fn new(kind: ExperimentKind, lambda: f64, preset: &str) -> Self {
        let mut cfg = Self {
            kind,
            lambda,
            seeds: default_seeds(),
            interference: InterferenceSpec {
                dim: 1,
                preset: Some(preset.to_string()),
                weights: None,
            },
            output_dir: None,
            mean_vs_formula: None,
            covariance_figure: None,
            moment_bounds: None,
            coupling_suite: None,
            loynes: None,
            local_vs_box: None,
            frozen_wall: None,
            bounded_start_convergence: None,
            supercritical_growth: None,
            fluid_transience: None,
            infinite_support: None,
            source: None,
        };
        cfg.fill_default_section();
        cfg
    }

    pub fn with_seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = seeds.into_iter().collect();
        self
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
        cfg.fill_default_section();
        cfg.check()?;
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse_str(&text)?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    fn fill_default_section(&mut self) {
        match self.kind {
            ExperimentKind::MeanVsFormula => drop(self.mean_vs_formula.get_or_insert_with(Default::default)),
            ExperimentKind::CovarianceFigure => drop(self.covariance_figure.get_or_insert_with(Default::default)),
            ExperimentKind::MomentBounds => drop(self.moment_bounds.get_or_insert_with(Default::default)),
            ExperimentKind::CouplingSuite => drop(self.coupling_suite.get_or_insert_with(Default::default)),
            ExperimentKind::Loynes => drop(self.loynes.get_or_insert_with(Default::default)),
            ExperimentKind::LocalVsBox => drop(self.local_vs_box.get_or_insert_with(Default::default)),
            ExperimentKind::FrozenWall => drop(self.frozen_wall.get_or_insert_with(Default::default)),
            ExperimentKind::BoundedStartConvergence => drop(self.bounded_start_convergence.get_or_insert_with(Default::default)),
            ExperimentKind::SupercriticalGrowth => drop(self.supercritical_growth.get_or_insert_with(Default::default)),
            ExperimentKind::FluidTransience => drop(self.fluid_transience.get_or_insert_with(Default::default)),
            ExperimentKind::InfiniteSupport => drop(self.infinite_support.get_or_insert_with(Default::default)),
        }
    }

    fn sections(&self) -> [(ExperimentKind, bool); 11] {
        [
            (ExperimentKind::MeanVsFormula, self.mean_vs_formula.is_some()),
            (ExperimentKind::CovarianceFigure, self.covariance_figure.is_some()),
            (ExperimentKind::MomentBounds, self.moment_bounds.is_some()),
            (ExperimentKind::CouplingSuite, self.coupling_suite.is_some()),
            (ExperimentKind::Loynes, self.loynes.is_some()),
            (ExperimentKind::LocalVsBox, self.local_vs_box.is_some()),
            (ExperimentKind::FrozenWall, self.frozen_wall.is_some()),
            (ExperimentKind::BoundedStartConvergence, self.bounded_start_convergence.is_some()),
            (ExperimentKind::SupercriticalGrowth, self.supercritical_growth.is_some()),
            (ExperimentKind::FluidTransience, self.fluid_transience.is_some()),
            (ExperimentKind::InfiniteSupport, self.infinite_support.is_some()),
        ]
    }

    pub fn sequence(&self) -> Result<InterferenceSequence, ConfigError> {
        self.interference.build()
    }

    /// Checks the preconditions of the operations the kind invokes.
    pub fn check(&self) -> Result<(), ConfigError> {
        for (kind, present) in self.sections() {
            if present && kind != self.kind {
                return semantic(format!("section [{kind}] does not apply to kind {}", self.kind));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return semantic(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.seeds.is_empty() {
            return semantic("seeds must be nonempty");
        }
        let seq = self.sequence()?;
        let lambda = self.lambda;
        let critical = seq.critical_rate();
        let subcritical = |what: &str| -> Result<(), ConfigError> {
            if lambda >= critical {
                semantic(format!("{what} needs lambda < critical rate {critical} (supercritical lambda {lambda})"))
            } else {
                Ok(())
            }
        };
        let torus = |n: u32| -> Result<(), ConfigError> {
            if 2 * n + 1 <= 2 * seq.radius() {
                semantic(format!("torus half-width {n} too small for interference radius {}", seq.radius()))
            } else {
                Ok(())
            }
        };
        let positive = |name: &str, v: f64| -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                semantic(format!("{name} must be positive, got {v}"))
            }
        };
        let batches = |b: usize| -> Result<(), ConfigError> {
            if b < crate::stats::MIN_BATCHES {
                semantic(format!("batches must be at least {}, got {b}", crate::stats::MIN_BATCHES))
            } else {
                Ok(())
            }
        };
        let one_dim = |what: &str| -> Result<(), ConfigError> {
            if seq.dim() != 1 {
                semantic(format!("{what} is defined for d = 1 only"))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::MeanVsFormula => {
                let p = self.mean_vs_formula.as_ref().expect("filled");
                subcritical("mean-vs-formula")?;
                torus(p.n)?;
                positive("horizon", p.horizon)?;
                batches(p.batches)?;
            }
            ExperimentKind::CovarianceFigure => {
                let p = self.covariance_figure.as_ref().expect("filled");
                subcritical("covariance-figure")?;
                torus(p.n)?;
                positive("horizon", p.horizon)?;
                batches(p.batches)?;
                if p.max_lag > 2 * p.n {
                    return semantic("max_lag exceeds the torus");
                }
            }
            ExperimentKind::MomentBounds => {
                let p = self.moment_bounds.as_ref().expect("filled");
                subcritical("moment-bounds")?;
                torus(p.n)?;
                positive("horizon", p.horizon)?;
                batches(p.batches)?;
                seq.second_moment_bound(lambda)
                    .map_err(|e| ConfigError::Semantic(format!("moment-bounds: {e}")))?;
            }
            ExperimentKind::CouplingSuite => {
                let p = self.coupling_suite.as_ref().expect("filled");
                torus(p.n)?;
                positive("horizon", p.horizon)?;
                if p.suppress_window[0] >= p.suppress_window[1] {
                    return semantic("suppress_window must be increasing");
                }
            }
            ExperimentKind::Loynes => {
                let p = self.loynes.as_ref().expect("filled");
                torus(p.n)?;
                positive("t0", p.t0)?;
                if p.boxes.windows(2).any(|w| w[0] >= w[1]) {
                    return semantic("loynes boxes must be strictly increasing");
                }
            }
            ExperimentKind::LocalVsBox => {
                let p = self.local_vs_box.as_ref().expect("filled");
                positive("horizon", p.horizon)?;
                if !(p.safety > 0.0 && p.safety < 1.0) {
                    return semantic("safety must lie in (0, 1)");
                }
            }
            ExperimentKind::FrozenWall => {
                let p = self.frozen_wall.as_ref().expect("filled");
                one_dim("frozen-wall")?;
                p.magnitude.count()?;
                if p.wall <= seq.radius() {
                    return semantic("wall must lie beyond the interference radius");
                }
                positive("adjacent_time", p.adjacent_time)?;
                if p.checkpoints.is_empty() || p.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return semantic("checkpoints must be nonempty and increasing");
                }
            }
            ExperimentKind::BoundedStartConvergence => {
                let p = self.bounded_start_convergence.as_ref().expect("filled");
                subcritical("bounded-start-convergence")?;
                torus(p.n)?;
                positive("horizon", p.horizon)?;
                batches(p.batches)?;
            }
            ExperimentKind::SupercriticalGrowth => {
                let p = self.supercritical_growth.as_ref().expect("filled");
                if lambda <= critical {
                    return semantic(format!("supercritical-growth needs lambda > critical rate {critical}"));
                }
                torus(p.n)?;
                positive("horizon", p.horizon)?;
                positive("sample_every", p.sample_every)?;
                if p.horizon / p.sample_every < 3.0 {
                    return semantic("need at least three growth samples");
                }
            }
            ExperimentKind::FluidTransience => {
                let p = self.fluid_transience.as_ref().expect("filled");
                one_dim("fluid-transience")?;
                if lambda <= critical {
                    return semantic(format!("fluid-transience needs lambda > critical rate {critical}"));
                }
                if p.subcritical_lambda >= critical || p.subcritical_lambda < 0.0 {
                    return semantic(format!("subcritical_lambda must lie in [0, {critical})"));
                }
                positive("step", p.step)?;
                positive("sample_every", p.sample_every)?;
                if p.sample_every < p.step || p.scaling_sample_every < p.step {
                    return semantic("sample intervals must be at least one step");
                }
                if p.scales.len() < 2 || p.scales.iter().any(|&z| z < 1.0) {
                    return semantic("scales needs at least two entries >= 1");
                }
            }
            ExperimentKind::InfiniteSupport => {
                let p = self.infinite_support.as_ref().expect("filled");
                subcritical("infinite-support")?;
                torus(p.n)?;
                if p.radii.is_empty() || p.radii.windows(2).any(|w| w[0] >= w[1]) {
                    return semantic("radii must be nonempty and increasing");
                }
                if 2 * p.n + 1 <= 2 * p.radii[p.radii.len() - 1] {
                    return semantic("torus too small for the largest radius");
                }
                positive("horizon", p.horizon)?;
                batches(p.batches)?;
            }
        }
        Ok(())
    }
}
