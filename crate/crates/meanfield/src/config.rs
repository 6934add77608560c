//! Experiment configuration: a versioned TOML schema.
//!
//! Parsing never stops at the first problem. Unknown keys, missing keys,
//! keys that do not apply to the chosen family, and out-of-range values are
//! all collected into one [`ConfigError`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use meanfield_core::control::{ControlFamily, FamilyShape};
use meanfield_core::functional::{Event, Functional};
use meanfield_core::laplace::{OptimizeSettings, Speed};
use meanfield_core::limit::FixedPointSettings;
use meanfield_core::model::{BuiltinFamily, BuiltinModel, InitialLaw, ModelDims, Theta, WeightCoefficients, WeightLaw};
use meanfield_core::rate::KappaRule;
use meanfield_core::simulate::{SystemKind, TimeGrid};

pub const SCHEMA_VERSION: u32 = 1;

/// The experiments `run` can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    Validate,
    Lln,
    FeynmanKac,
    Variance,
    Laplace,
    Optimize,
    RareEvent,
    Rate,
    Regimes,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Validate,
        Command::Lln,
        Command::FeynmanKac,
        Command::Variance,
        Command::Laplace,
        Command::Optimize,
        Command::RareEvent,
        Command::Rate,
        Command::Regimes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Lln => "lln",
            Command::FeynmanKac => "feynman-kac",
            Command::Variance => "variance",
            Command::Laplace => "laplace",
            Command::Optimize => "optimize",
            Command::RareEvent => "rare-event",
            Command::Rate => "rate",
            Command::Regimes => "regimes",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} config violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    LinearMeanField,
    OrnsteinUhlenbeck,
    Constant,
    PureBrownian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaName {
    Identity,
    Log1p,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loading: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_loading: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    #[default]
    Dirac,
    Gaussian,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLawName {
    Constant,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(default)]
    pub law: LawName,
    /// Dirac location; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightLawName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Zero,
    Critical,
    Subcritical,
    Supercritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSpec {
    pub rule: RuleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalName {
    Constant,
    ClippedEndpointMean,
    ShortfallPenalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub kind: FunctionalName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventName {
    WholeSpace,
    EndpointMeanAtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlShape {
    PiecewiseConstant,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ControlShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub individual: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common: Option<bool>,
    /// Control table to load instead of optimizing (relative to the config file).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dim: Option<usize>,
    /// Replicas for the direct Laplace estimate reported next to the optimum (0 skips it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_replicas: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LimitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systems: Option<Vec<SystemName>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    Unweighted,
    Weighted,
}

impl SystemName {
    pub fn kind(&self) -> SystemKind {
        match self {
            SystemName::Unweighted => SystemKind::Unweighted,
            SystemName::Weighted => SystemKind::Weighted,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemName::Unweighted => "unweighted",
            SystemName::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableName {
    One,
    X,
    X2,
}

impl ObservableName {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ObservableName::One => 1.0,
            ObservableName::X => x[0],
            ObservableName::X2 => x[0] * x[0],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObservableName::One => "one",
            ObservableName::X => "x",
            ObservableName::X2 => "x2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedName {
    N,
    InverseKappaSquared,
}

impl SpeedName {
    pub fn speed(&self) -> Speed {
        match self {
            SpeedName::N => Speed::Particles,
            SpeedName::InverseKappaSquared => Speed::InverseKappaSquared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeynmanKacSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableName>,
    /// Write per-replica trajectories of mass and ⟨g, μ⟩.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VarianceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableName>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaplaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<SpeedName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemName>,
    /// Number of random controls whose cost is compared with the direct estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_controls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_replicas: Option<usize>,
    /// Random control parameters are uniform in `[−control_scale, control_scale]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltName {
    None,
    Optimized,
    File,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<TiltName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Output directory; the `--output-dir` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Also export every atom of the limit flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export_flow: Option<bool>,
    /// Write full particle paths of `feynman-kac` to `paths.bin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_paths: Option<bool>,
}

/// One experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    pub model: ModelSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<KappaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<KappaSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<EventSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feynman_kac: Option<FeynmanKacSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// Parses a config and checks it for `command`, collecting every violation.
pub fn parse(text: &str, command: Command) -> Result<ExperimentConfig, ConfigError> {
    let mut unknown = BTreeSet::new();
    let de = toml::Deserializer::parse(text).map_err(|e| single("config", e.to_string()))?;
    let config: ExperimentConfig = serde_ignored::deserialize(de, |path| {
        // Option layers show up as `?` segments.
        let field: Vec<String> = path.to_string().split('.').filter(|s| *s != "?").map(String::from).collect();
        unknown.insert(field.join("."));
    })
    .map_err(|e| single("config", e.to_string()))?;
    let mut c = Checker::default();
    for path in unknown {
        c.push(&path, "unknown key");
    }
    config.check(command, &mut c);
    c.finish()?;
    Ok(config)
}

fn single(field: &str, message: String) -> ConfigError {
    ConfigError {
        violations: vec![Violation {
            field: field.into(),
            message: message.trim().replace('\n', " "),
        }],
    }
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    fn finite(&mut self, field: &str, value: Option<f64>) {
        if let Some(v) = value {
            if !v.is_finite() {
                self.push(field, "must be finite");
            }
        }
    }

    fn positive(&mut self, field: &str, value: Option<f64>) {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                self.push(field, "must be positive and finite");
            }
        }
    }

    fn at_least(&mut self, field: &str, value: Option<usize>, min: usize) {
        if let Some(v) = value {
            if v < min {
                self.push(field, format!("must be at least {min}"));
            }
        }
    }

    fn required<T>(&mut self, field: &str, value: &Option<T>) {
        if value.is_none() {
            self.push(field, "required");
        }
    }

    fn unused<T>(&mut self, field: &str, value: &Option<T>, context: &str) {
        if value.is_some() {
            self.push(field, format!("not used by {context}"));
        }
    }

    fn finish(mut self) -> Result<(), ConfigError> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            self.violations.sort();
            self.violations.dedup();
            Err(ConfigError {
                violations: self.violations,
            })
        }
    }
}

impl ExperimentConfig {
    fn check(&self, command: Command, c: &mut Checker) {
        if self.schema_version != SCHEMA_VERSION {
            c.push("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        let dims = self.model.check(c);
        self.initial.check(dims.d, c);
        c.positive("grid.horizon", Some(self.grid.horizon));
        c.at_least("grid.steps", Some(self.grid.steps), 1);
        if let Some(k) = &self.kappa {
            k.check("kappa", c);
        }
        for (i, k) in self.rules.iter().flatten().enumerate() {
            k.check(&format!("rules[{i}]"), c);
        }
        c.at_least("n", self.n, 1);
        if let Some(list) = &self.n_list {
            if list.is_empty() || list.contains(&0) {
                c.push("n_list", "needs positive particle counts");
            }
        }
        c.at_least("replicas", self.replicas, 2);
        if let Some(f) = &self.functional {
            f.check(dims.d, c);
        }
        if let Some(e) = &self.event {
            e.check(dims.d, c);
        }
        if let Some(ctl) = &self.control {
            c.at_least("control.pieces", ctl.pieces, 1);
            c.positive("control.radius", ctl.radius);
            if ctl.individual == Some(false) && ctl.common == Some(false) {
                c.push("control", "at least one of individual/common must be free");
            }
        }
        if let Some(o) = &self.optimize {
            c.at_least("optimize.budget", o.budget, 1);
            c.at_least("optimize.search_replicas", o.search_replicas, 2);
            c.at_least("optimize.final_replicas", o.final_replicas, 2);
            c.positive("optimize.initial_step", o.initial_step);
            c.positive("optimize.perturbation", o.perturbation);
            c.at_least("optimize.max_dim", o.max_dim, 1);
        }
        if let Some(l) = &self.limit {
            c.at_least("limit.n_ref", l.n_ref, 1);
            c.at_least("limit.max_iters", l.max_iters, 1);
            c.positive("limit.tolerance", l.tolerance);
            c.at_least("limit.dictionary_size", l.dictionary_size, 1);
            if matches!(&l.systems, Some(s) if s.is_empty()) {
                c.push("limit.systems", "must list at least one system");
            }
        }
        if let Some(v) = &self.validate {
            c.at_least("validate.probes", v.probes, 1);
        }
        if let Some(v) = &self.variance {
            if let Some(list) = &v.kappa_list {
                if list.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
                    c.push("variance.kappa_list", "values must be finite and nonnegative");
                }
            }
        }
        if let Some(l) = &self.laplace {
            c.at_least("laplace.control_replicas", l.control_replicas, 2);
            c.positive("laplace.control_scale", l.control_scale);
        }
        if let Some(r) = &self.rate {
            c.positive("rate.slope", r.slope);
            c.positive("rate.cap", r.cap);
        }
        self.check_command(command, c);
    }

    fn check_command(&self, command: Command, c: &mut Checker) {
        let needs_n = matches!(
            command,
            Command::FeynmanKac | Command::Laplace | Command::Optimize | Command::RareEvent
        );
        let needs_list = matches!(command, Command::Lln | Command::Variance | Command::Rate | Command::Regimes);
        let needs_replicas = !matches!(command, Command::Validate | Command::Optimize);
        if needs_n {
            c.required("n", &self.n);
        }
        if needs_list {
            c.required("n_list", &self.n_list);
        }
        if needs_replicas {
            c.required("replicas", &self.replicas);
        }
        match command {
            Command::Laplace | Command::Optimize => c.required("functional", &self.functional),
            Command::RareEvent | Command::Rate | Command::Regimes => c.required("event", &self.event),
            Command::Variance => {
                let list = self.variance.as_ref().and_then(|v| v.kappa_list.as_ref());
                if list.is_none() {
                    c.push("variance.kappa_list", "required");
                }
            }
            _ => {}
        }
        match command {
            Command::Regimes => {
                if self.rules.as_ref().is_none_or(|r| r.is_empty()) {
                    c.push("rules", "regimes needs at least one rule");
                }
            }
            Command::Lln | Command::Laplace | Command::Optimize | Command::RareEvent | Command::Rate => {
                c.required("kappa", &self.kappa);
            }
            _ => {}
        }
        let tilt = self.rate.as_ref().and_then(|r| r.tilt);
        if tilt == Some(TiltName::File) && self.control.as_ref().and_then(|c| c.file.as_ref()).is_none() {
            c.push("control.file", "required when the tilt comes from a file");
        }
        if matches!(command, Command::Rate | Command::Regimes) && tilt == Some(TiltName::File) {
            c.push("rate.tilt", "rate experiments optimize a tilt per n; use `optimized` or `none`");
        }
    }

    /// Canonical serialization, used for hashing and for the copy kept next to outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d: self.model.d.unwrap_or(1),
            m: self.model.m.unwrap_or(1),
            k: self.model.k.unwrap_or(1),
        }
    }

    pub fn build_model(&self) -> BuiltinModel {
        self.model.build(self.dims())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.horizon, self.grid.steps).expect("validated grid")
    }

    pub fn initial_law(&self) -> InitialLaw {
        let d = self.dims().d;
        let i = &self.initial;
        match i.law {
            LawName::Dirac => InitialLaw::Dirac {
                point: i.point.clone().unwrap_or_else(|| vec![0.0; d]),
            },
            LawName::Gaussian => InitialLaw::Gaussian {
                mean: i.mean.clone().unwrap_or_else(|| vec![0.0; d]),
                std: i.std.unwrap_or(1.0),
            },
            LawName::Uniform => InitialLaw::Uniform {
                dim: d,
                low: i.low.unwrap_or(0.0),
                high: i.high.unwrap_or(1.0),
            },
        }
    }

    /// Weight law of the weighted system; unit weights when not configured.
    pub fn weight_law(&self) -> WeightLaw {
        let i = &self.initial;
        match i.weights {
            None | Some(WeightLawName::Constant) => WeightLaw::Constant(i.weight.unwrap_or(1.0)),
            Some(WeightLawName::Lognormal) => WeightLaw::LogNormal {
                log_mean: i.log_mean.unwrap_or(0.0),
                log_std: i.log_std.unwrap_or(0.0),
            },
        }
    }

    /// Starting point for experiments that replicate one point; the Dirac
    /// location or the Gaussian mean.
    pub fn start_point(&self) -> Vec<f64> {
        match self.initial_law() {
            InitialLaw::Dirac { point } => point,
            InitialLaw::Gaussian { mean, .. } => mean,
            InitialLaw::Uniform { dim, low, high } => vec![0.5 * (low + high); dim],
        }
    }

    pub fn kappa_rule(&self) -> KappaRule {
        self.kappa.as_ref().map_or(KappaRule::Zero, KappaSpec::rule)
    }

    pub fn rules(&self) -> Vec<KappaRule> {
        self.rules.iter().flatten().map(KappaSpec::rule).collect()
    }

    pub fn functional(&self) -> Option<Functional> {
        self.functional.as_ref().map(FunctionalSpec::build)
    }

    pub fn event(&self) -> Option<Event> {
        self.event.as_ref().map(EventSpec::build)
    }

    pub fn control_family(&self) -> ControlFamily {
        let spec = self.control.clone().unwrap_or_default();
        ControlFamily {
            shape: match spec.shape {
                Some(ControlShape::Affine) => FamilyShape::Affine,
                _ => FamilyShape::PiecewiseConstant,
            },
            pieces: spec.pieces.unwrap_or(1),
            individual: spec.individual.unwrap_or(true),
            common: spec.common.unwrap_or(true),
        }
    }

    pub fn optimize_settings(&self) -> OptimizeSettings {
        let o = self.optimize.clone().unwrap_or_default();
        let d = OptimizeSettings::default();
        OptimizeSettings {
            budget: o.budget.unwrap_or(d.budget),
            search_replicas: o.search_replicas.unwrap_or(d.search_replicas),
            final_replicas: o.final_replicas.unwrap_or(d.final_replicas),
            start: None,
            initial_step: o.initial_step.unwrap_or(d.initial_step),
            perturbation: o.perturbation.unwrap_or(d.perturbation),
            max_dim: o.max_dim.unwrap_or(d.max_dim),
            seed: self.seed,
        }
    }

    pub fn fixed_point_settings(&self) -> FixedPointSettings {
        let l = self.limit.clone().unwrap_or_default();
        let d = FixedPointSettings::default();
        FixedPointSettings {
            n_ref: l.n_ref.unwrap_or(d.n_ref),
            max_iters: l.max_iters.unwrap_or(d.max_iters),
            tolerance: l.tolerance.unwrap_or(d.tolerance),
            dictionary_size: l.dictionary_size.unwrap_or(d.dictionary_size),
            seed: self.seed,
        }
    }
}

impl ModelSpec {
    fn check(&self, c: &mut Checker) -> ModelDims {
        for (name, v) in [("model.d", self.d), ("model.m", self.m), ("model.k", self.k)] {
            c.at_least(name, v, 1);
        }
        let dims = ModelDims {
            d: self.d.unwrap_or(1).max(1),
            m: self.m.unwrap_or(1).max(1),
            k: self.k.unwrap_or(1).max(1),
        };
        let family = match self.family {
            FamilyName::LinearMeanField => "linear_mean_field",
            FamilyName::OrnsteinUhlenbeck => "ornstein_uhlenbeck",
            FamilyName::Constant => "constant",
            FamilyName::PureBrownian => "pure_brownian",
        };
        let params: [(&str, Option<f64>, &[FamilyName]); 6] = [
            ("reversion", self.reversion, &[FamilyName::LinearMeanField, FamilyName::OrnsteinUhlenbeck]),
            ("coupling", self.coupling, &[FamilyName::LinearMeanField]),
            ("level", self.level, &[FamilyName::OrnsteinUhlenbeck]),
            ("drift", self.drift, &[FamilyName::Constant]),
            (
                "sigma",
                self.sigma,
                &[FamilyName::LinearMeanField, FamilyName::OrnsteinUhlenbeck, FamilyName::Constant],
            ),
            (
                "alpha",
                self.alpha,
                &[FamilyName::LinearMeanField, FamilyName::OrnsteinUhlenbeck, FamilyName::Constant],
            ),
        ];
        for (name, value, used_by) in params {
            let field = format!("model.{name}");
            if used_by.contains(&self.family) {
                c.required(&field, &value);
                c.finite(&field, value);
            } else {
                c.unused(&field, &value, &format!("family {family}"));
            }
        }
        if self.family == FamilyName::PureBrownian && (dims.d != dims.m || dims.d != dims.k) {
            c.push("model", "pure_brownian needs d = m = k");
        }
        match self.theta {
            Some(ThetaName::Log1p) => c.positive("model.theta_scale", Some(self.theta_scale.unwrap_or(1.0))),
            _ => c.unused("model.theta_scale", &self.theta_scale, "theta identity"),
        }
        c.positive("model.bound", self.bound);
        if let Some(w) = &self.weights {
            c.finite("model.weights.rate", w.rate);
            c.finite("model.weights.slope", w.slope);
            c.finite("model.weights.loading", w.loading);
            c.finite("model.weights.common_loading", w.common_loading);
        }
        dims
    }

    fn build(&self, dims: ModelDims) -> BuiltinModel {
        let v = |x: Option<f64>| x.unwrap_or(0.0);
        let family = match self.family {
            FamilyName::LinearMeanField => BuiltinFamily::LinearMeanField {
                reversion: v(self.reversion),
                coupling: v(self.coupling),
                sigma: v(self.sigma),
                alpha: v(self.alpha),
            },
            FamilyName::OrnsteinUhlenbeck => BuiltinFamily::OrnsteinUhlenbeck {
                reversion: v(self.reversion),
                level: v(self.level),
                sigma: v(self.sigma),
                alpha: v(self.alpha),
            },
            FamilyName::Constant => BuiltinFamily::Constant {
                drift: v(self.drift),
                sigma: v(self.sigma),
                alpha: v(self.alpha),
            },
            FamilyName::PureBrownian => BuiltinFamily::PureBrownian,
        };
        let w = self.weights.clone().unwrap_or_default();
        let mut model = BuiltinModel::new(family, dims)
            .expect("validated model")
            .with_weights(WeightCoefficients {
                rate: v(w.rate),
                slope: v(w.slope),
                loading: v(w.loading),
                common_loading: v(w.common_loading),
            })
            .with_theta(match self.theta {
                Some(ThetaName::Log1p) => Theta::Log1p {
                    scale: self.theta_scale.unwrap_or(1.0),
                },
                _ => Theta::Identity,
            });
        if let Some(b) = self.bound {
            model = model.with_bound(b);
        }
        model
    }
}

impl InitialSpec {
    fn check(&self, d: usize, c: &mut Checker) {
        let vec_ok = |c: &mut Checker, field: &str, v: &Option<Vec<f64>>| {
            if let Some(v) = v {
                if v.len() != d {
                    c.push(field, format!("needs {d} coordinates"));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    c.push(field, "must be finite");
                }
            }
        };
        match self.law {
            LawName::Dirac => {
                vec_ok(c, "initial.point", &self.point);
                for (f, v) in [("initial.std", self.std), ("initial.low", self.low), ("initial.high", self.high)] {
                    c.unused(f, &v, "law dirac");
                }
                c.unused("initial.mean", &self.mean, "law dirac");
            }
            LawName::Gaussian => {
                vec_ok(c, "initial.mean", &self.mean);
                if let Some(s) = self.std {
                    if !(s >= 0.0 && s.is_finite()) {
                        c.push("initial.std", "must be nonnegative and finite");
                    }
                }
                c.unused("initial.point", &self.point, "law gaussian");
                c.unused("initial.low", &self.low, "law gaussian");
                c.unused("initial.high", &self.high, "law gaussian");
            }
            LawName::Uniform => {
                c.finite("initial.low", self.low);
                c.finite("initial.high", self.high);
                if self.low.unwrap_or(0.0) > self.high.unwrap_or(1.0) {
                    c.push("initial.high", "must not be below initial.low");
                }
                c.unused("initial.point", &self.point, "law uniform");
                c.unused("initial.mean", &self.mean, "law uniform");
                c.unused("initial.std", &self.std, "law uniform");
            }
        }
        match self.weights {
            Some(WeightLawName::Lognormal) => {
                c.finite("initial.log_mean", self.log_mean);
                if let Some(s) = self.log_std {
                    if !(s >= 0.0 && s.is_finite()) {
                        c.push("initial.log_std", "must be nonnegative and finite");
                    }
                }
                c.unused("initial.weight", &self.weight, "weights lognormal");
            }
            _ => {
                c.positive("initial.weight", self.weight);
                c.unused("initial.log_mean", &self.log_mean, "constant weights");
                c.unused("initial.log_std", &self.log_std, "constant weights");
            }
        }
    }
}

impl KappaSpec {
    fn check(&self, prefix: &str, c: &mut Checker) {
        let f = |name: &str| format!("{prefix}.{name}");
        match self.rule {
            RuleName::Zero => {
                c.unused(&f("lambda"), &self.lambda, "rule zero");
                c.unused(&f("c"), &self.c, "rule zero");
                c.unused(&f("p"), &self.p, "rule zero");
            }
            RuleName::Critical => {
                c.required(&f("lambda"), &self.lambda);
                c.positive(&f("lambda"), self.lambda);
                c.unused(&f("c"), &self.c, "rule critical");
                c.unused(&f("p"), &self.p, "rule critical");
            }
            RuleName::Subcritical | RuleName::Supercritical => {
                c.unused(&f("lambda"), &self.lambda, "power rules");
                c.positive(&f("c"), self.c);
                c.required(&f("p"), &self.p);
                if let Some(p) = self.p {
                    let ok = if self.rule == RuleName::Subcritical {
                        p > 0.5 && p.is_finite()
                    } else {
                        p > 0.0 && p < 0.5
                    };
                    if !ok {
                        let range = if self.rule == RuleName::Subcritical { "p > 1/2" } else { "0 < p < 1/2" };
                        c.push(&f("p"), format!("must satisfy {range}"));
                    }
                }
            }
        }
    }

    pub fn rule(&self) -> KappaRule {
        match self.rule {
            RuleName::Zero => KappaRule::Zero,
            RuleName::Critical => KappaRule::Critical {
                lambda: self.lambda.unwrap_or(1.0),
            },
            RuleName::Subcritical => KappaRule::Subcritical {
                c: self.c.unwrap_or(1.0),
                p: self.p.unwrap_or(1.0),
            },
            RuleName::Supercritical => KappaRule::Supercritical {
                c: self.c.unwrap_or(1.0),
                p: self.p.unwrap_or(0.25),
            },
        }
    }
}

impl FunctionalSpec {
    fn check(&self, d: usize, c: &mut Checker) {
        let used: &[&str] = match self.kind {
            FunctionalName::Constant => &["value"],
            FunctionalName::ClippedEndpointMean => &["coord", "scale", "offset", "low", "high"],
            FunctionalName::ShortfallPenalty => &["coord", "threshold", "slope", "cap"],
        };
        let fields: [(&str, Option<f64>); 8] = [
            ("value", self.value),
            ("scale", self.scale),
            ("offset", self.offset),
            ("low", self.low),
            ("high", self.high),
            ("threshold", self.threshold),
            ("slope", self.slope),
            ("cap", self.cap),
        ];
        for (name, value) in fields {
            let field = format!("functional.{name}");
            if used.contains(&name) {
                c.finite(&field, value);
                if name != "offset" {
                    c.required(&field, &value);
                }
            } else {
                c.unused(&field, &value, "this functional kind");
            }
        }
        if used.contains(&"coord") {
            if self.coord.unwrap_or(0) >= d {
                c.push("functional.coord", "out of range for the state dimension");
            }
        } else {
            c.unused("functional.coord", &self.coord, "this functional kind");
        }
        if self.kind == FunctionalName::ClippedEndpointMean && self.low.unwrap_or(0.0) > self.high.unwrap_or(0.0) {
            c.push("functional.high", "must not be below functional.low");
        }
        if self.kind == FunctionalName::ShortfallPenalty {
            c.positive("functional.slope", self.slope);
            c.positive("functional.cap", self.cap);
        }
    }

    fn build(&self) -> Functional {
        let v = |x: Option<f64>| x.unwrap_or(0.0);
        match self.kind {
            FunctionalName::Constant => Functional::constant(v(self.value)),
            FunctionalName::ClippedEndpointMean => Functional::clipped_endpoint_mean(
                self.coord.unwrap_or(0),
                v(self.scale),
                v(self.offset),
                v(self.low),
                v(self.high),
            )
            .expect("validated functional"),
            FunctionalName::ShortfallPenalty => {
                Functional::shortfall_penalty(self.coord.unwrap_or(0), v(self.threshold), v(self.slope), v(self.cap))
                    .expect("validated functional")
            }
        }
    }
}

impl EventSpec {
    fn check(&self, d: usize, c: &mut Checker) {
        match self.kind {
            EventName::WholeSpace => {
                c.unused("event.coord", &self.coord, "whole_space");
                c.unused("event.threshold", &self.threshold, "whole_space");
            }
            EventName::EndpointMeanAtLeast => {
                c.required("event.threshold", &self.threshold);
                c.finite("event.threshold", self.threshold);
                if self.coord.unwrap_or(0) >= d {
                    c.push("event.coord", "out of range for the state dimension");
                }
            }
        }
    }

    fn build(&self) -> Event {
        match self.kind {
            EventName::WholeSpace => Event::WholeSpace,
            EventName::EndpointMeanAtLeast => Event::EndpointMeanAtLeast {
                coord: self.coord.unwrap_or(0),
                threshold: self.threshold.unwrap_or(0.0),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 3
n = 10
replicas = 20

[model]
family = "pure_brownian"

[grid]
horizon = 1.0
steps = 4

[kappa]
rule = "critical"
lambda = 1.0

[functional]
kind = "constant"
value = 0.5
"#;

    #[test]
    fn minimal_config_parses_and_round_trips() {
        let config = parse(MINIMAL, Command::Laplace).unwrap();
        let again = parse(&config.to_toml(), Command::Laplace).unwrap();
        assert_eq!(config, again);
    }

    #[test]
    fn every_violation_is_listed() {
        let text = MINIMAL
            .replace("schema_version = 1", "schema_version = 7\ncolour = 3")
            .replace("steps = 4", "steps = 0\nwidth = 2")
            .replace("lambda = 1.0", "lambda = -1.0");
        let err = parse(&text, Command::Laplace).unwrap_err();
        let fields: Vec<&str> = err.violations.iter().map(|v| v.field.as_str()).collect();
        for expected in ["schema_version", "colour", "grid.steps", "grid.width", "kappa.lambda"] {
            assert!(fields.contains(&expected), "{expected} missing from {fields:?}");
        }
    }

    #[test]
    fn command_requirements() {
        let err = parse(MINIMAL, Command::Rate).unwrap_err();
        let fields: Vec<&str> = err.violations.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"n_list"));
        assert!(fields.contains(&"event"));
    }

    #[test]
    fn family_parameters_are_checked() {
        let text = MINIMAL.replace("family = \"pure_brownian\"", "family = \"linear_mean_field\"\nlevel = 2.0\nsigma = 1.0");
        let err = parse(&text, Command::Laplace).unwrap_err();
        let fields: Vec<&str> = err.violations.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"model.level"));
        assert!(fields.contains(&"model.reversion"));
        assert!(fields.contains(&"model.coupling"));
        assert!(fields.contains(&"model.alpha"));
        assert!(!fields.contains(&"model.sigma"));
    }
}
