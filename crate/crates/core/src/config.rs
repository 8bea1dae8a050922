//! Experiment configuration files.

use crate::penalty::{
    AdmissibleSet, ConcentricParams, CostKind, CostSpec, Penalty, PenaltyEngine, PenaltyError, RadialParams,
};
use crate::ssn::{ContinuationMode, SolverConfig};
use crate::transport::{Layout, NetworkSpec, Scenario, TransportNetwork};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// source of all randomness in the run
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// solver settings; problem-specific defaults when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    pub problem: ProblemConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Bloch(BlochConfig),
    Elasticity(ElasticityConfig),
    Transport(TransportConfig),
    PenaltyMap(PenaltyMapConfig),
    Verify(VerifyConfig),
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::Bloch(_) => "bloch",
            ProblemConfig::Elasticity(_) => "elasticity",
            ProblemConfig::Transport(_) => "transport",
            ProblemConfig::PenaltyMap(_) => "penalty_map",
            ProblemConfig::Verify(_) => "verify",
        }
    }
}

/// Admissible control values; the cost weight lives next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PenaltyConfig {
    /// `count` equispaced phases starting at `offset`, or explicit `phases`
    Radial {
        omega0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
        #[serde(default)]
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<Vec<f64>>,
        /// evaluate through the general engine instead of the closed form
        #[serde(default)]
        general: bool,
    },
    Concentric {
        #[serde(default)]
        general: bool,
    },
    General { points: Vec<Vec<f64>>, cost: CostKind },
}

impl PenaltyConfig {
    pub fn build(&self, alpha: f64) -> Result<Box<dyn Penalty>, ConfigError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", "must be finite and nonnegative"));
        }
        Ok(match self {
            PenaltyConfig::Radial { omega0, count, offset, phases, general } => {
                let params = match (count, phases) {
                    (_, Some(p)) => RadialParams::new(*omega0, p, alpha)?,
                    (Some(c), None) => RadialParams::equispaced(*omega0, *c, *offset, alpha)?,
                    (None, None) => return Err(invalid("penalty", "radial needs `count` or `phases`")),
                };
                if *general {
                    Box::new(PenaltyEngine::new(params.admissible_set(), params.cost())?)
                } else {
                    Box::new(params)
                }
            }
            PenaltyConfig::Concentric { general } => {
                let params = ConcentricParams::new(alpha);
                if *general {
                    Box::new(PenaltyEngine::new(params.admissible_set(), params.cost())?)
                } else {
                    Box::new(params)
                }
            }
            PenaltyConfig::General { points, cost } => {
                Box::new(PenaltyEngine::new(AdmissibleSet::new(points.clone())?, CostSpec::new(cost.clone(), alpha))?)
            }
        })
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn default_intervals() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochConfig {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    /// resonance offsets in rad/s
    pub offsets: Vec<f64>,
    pub targets: Vec<[f64; 3]>,
    pub alpha: f64,
    pub penalty: PenaltyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TargetConfig {
    Rotation {
        #[serde(default = "default_angle")]
        angle: f64,
    },
    /// top-edge traction to the left; noise amplitude drawn from the run seed
    Deadload {
        magnitude: f64,
        #[serde(default)]
        noise: f64,
    },
}

fn default_angle() -> f64 {
    std::f64::consts::FRAC_PI_4
}

fn default_young() -> f64 {
    20.0
}

fn default_poisson() -> f64 {
    0.3
}

fn default_resolution() -> usize {
    129
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticityConfig {
    #[serde(default = "default_young")]
    pub young: f64,
    #[serde(default = "default_poisson")]
    pub poisson: f64,
    /// vertices per direction
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// vertices in the vertical direction when different from `resolution`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical_resolution: Option<usize>,
    pub alpha: f64,
    pub penalty: PenaltyConfig,
    pub target: TargetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NetworkConfig {
    /// jittered grid; the generator seed is the run seed
    Generated {
        #[serde(default = "default_grid")]
        grid_n: usize,
        #[serde(default = "default_spacing")]
        spacing: f64,
        #[serde(default = "default_jitter")]
        jitter: f64,
        #[serde(default = "default_prune")]
        prune_factor: f64,
    },
    /// network file with explicit scenarios
    File { path: PathBuf },
}

fn default_grid() -> usize {
    NetworkSpec::default().grid_n
}

fn default_spacing() -> f64 {
    NetworkSpec::default().spacing
}

fn default_jitter() -> f64 {
    NetworkSpec::default().jitter
}

fn default_prune() -> f64 {
    NetworkSpec::default().prune_factor
}

fn default_amount() -> f64 {
    1.0
}

fn default_norm_cost() -> CostKind {
    CostKind::Norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub network: NetworkConfig,
    /// source/sink layout for generated networks
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    #[serde(default = "default_amount")]
    pub amount: f64,
    pub alpha: f64,
    #[serde(default = "default_norm_cost")]
    pub cost: CostKind,
}

/// On-disk network: geometry, orientation and the transport scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub vertices: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize)>,
    pub materials: usize,
    pub scenarios: Vec<Scenario>,
}

impl NetworkFile {
    pub fn from_network(net: &TransportNetwork, scenarios: &[Scenario]) -> Self {
        Self { vertices: net.coords.clone(), edges: net.edges.clone(), materials: net.materials, scenarios: scenarios.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// samples per direction
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyMapConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub penalty: PenaltyConfig,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// relative perturbation of the closed-form radial cost weight
    #[serde(default)]
    pub perturb_radial_alpha: f64,
}

fn merge_json(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k.clone()).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if cfg.solver.is_some() && matches!(cfg.problem, ProblemConfig::Transport(_)) {
            // keys left out of the solver block fall back to the adaptive defaults
            let raw: serde_json::Value = serde_json::from_str(text).expect("parsed above");
            let mut merged = serde_json::to_value(SolverConfig::adaptive_defaults()).expect("serializes");
            merge_json(&mut merged, &raw["solver"]);
            cfg.solver = Some(serde_json::from_value(merged).map_err(|e| invalid("solver", e.to_string()))?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version(self.schema_version));
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(|e| invalid("solver", e.to_string()))?;
        }
        match &self.problem {
            ProblemConfig::Bloch(b) => {
                if !(b.horizon > 0.0) {
                    return Err(invalid("problem.horizon", "must be positive"));
                }
                if b.intervals == 0 {
                    return Err(invalid("problem.intervals", "must be positive"));
                }
                if b.offsets.is_empty() || b.offsets.len() != b.targets.len() {
                    return Err(invalid("problem.targets", "need one target per offset"));
                }
            }
            ProblemConfig::Elasticity(e) => {
                if !(e.young > 0.0) {
                    return Err(invalid("problem.young", "must be positive"));
                }
                if !(e.poisson > 0.0 && e.poisson < 0.5) {
                    return Err(invalid("problem.poisson", "must lie in (0, 1/2)"));
                }
                if e.resolution < 2 || e.vertical_resolution.is_some_and(|v| v < 2) {
                    return Err(invalid("problem.resolution", "need at least 2 vertices per direction"));
                }
            }
            ProblemConfig::Transport(t) => {
                if !(t.amount > 0.0) {
                    return Err(invalid("problem.amount", "must be positive"));
                }
                if let NetworkConfig::Generated { grid_n, .. } = t.network {
                    if grid_n < 2 {
                        return Err(invalid("problem.network.grid_n", "must be at least 2"));
                    }
                }
            }
            ProblemConfig::PenaltyMap(p) => {
                if !(p.gamma > 0.0) {
                    return Err(invalid("problem.gamma", "must be positive"));
                }
                if p.grid.n < 2 {
                    return Err(invalid("problem.grid.n", "must be at least 2"));
                }
            }
            ProblemConfig::Verify(_) => {}
        }
        let planar = match &self.problem {
            ProblemConfig::Bloch(b) => Some(&b.penalty),
            ProblemConfig::Elasticity(e) => Some(&e.penalty),
            ProblemConfig::PenaltyMap(p) => Some(&p.penalty),
            _ => None,
        };
        if let Some(PenaltyConfig::General { points, .. }) = planar {
            if points.iter().any(|p| p.len() != 2) {
                return Err(invalid("problem.penalty", "control values must be two-dimensional"));
            }
        }
        Ok(())
    }

    /// Solver settings after applying the problem defaults.
    pub fn solver_config(&self) -> SolverConfig {
        match (&self.solver, &self.problem) {
            (Some(s), _) => s.clone(),
            (None, ProblemConfig::Transport(_)) => SolverConfig::adaptive_defaults(),
            (None, _) => SolverConfig::default(),
        }
    }

    pub fn continuation_mode(&self) -> ContinuationMode {
        match self.problem {
            ProblemConfig::Transport(_) => ContinuationMode::Adaptive,
            _ => ContinuationMode::Fixed,
        }
    }
}
