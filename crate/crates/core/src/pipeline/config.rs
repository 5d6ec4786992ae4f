use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::frontend::FrontendParams;
use crate::geometry::Axis;
use crate::graph::{Weighting, DEFAULT_ANCHOR_WEIGHT, DEFAULT_MAX_GAP};
use crate::sim::{NoiseSpec, SensorModel, TrajectorySpec, WorldSpec};
use crate::solver::AdmmOptions;

pub const SCHEMA_VERSION: u32 = 1;

/// Where layout segments come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Noisy offsets of every visible plane, straight from the simulator.
    #[default]
    Range,
    /// Rendered depth frames through the compass, labeling and segmentation front-end.
    Depth,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    #[default]
    L2,
    L1,
    Linf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingChoice {
    #[default]
    Unweighted,
    /// Rows scaled by the inverse noise sigmas of the scenario.
    Noise,
}

fn default_epsilon() -> f64 {
    0.02
}
fn default_mu() -> f64 {
    0.3
}
fn default_max_gap() -> f64 {
    DEFAULT_MAX_GAP
}
fn default_anchor_weight() -> f64 {
    DEFAULT_ANCHOR_WEIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative slack of the residual ball over the least-squares residual.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Largest offset gap (m) at which a hypothesis counts as selected.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Largest initial gap (m) between two slots that yields a hypothesis.
    #[serde(default = "default_max_gap")]
    pub max_gap: f64,
    #[serde(default = "default_anchor_weight")]
    pub anchor_weight: f64,
    #[serde(default)]
    pub weighting: WeightingChoice,
    #[serde(default)]
    pub residual_norm: ResidualNorm,
    #[serde(default)]
    pub admm: AdmmOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            mu: default_mu(),
            max_gap: default_max_gap(),
            anchor_weight: default_anchor_weight(),
            weighting: WeightingChoice::default(),
            residual_norm: ResidualNorm::default(),
            admm: AdmmOptions::default(),
        }
    }
}

/// Two ground-truth layout planes whose separation the evaluation reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfacePairSpec {
    pub label: String,
    pub axis: Axis,
    /// World offsets of the two planes.
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub surface_pairs: Vec<SurfacePairSpec>,
    /// The world is built to provoke false equivalences; a convex stage that drifts more
    /// than least squares is reported rather than treated as a failure.
    #[serde(default)]
    pub adversarial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    pub world: WorldSpec,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub frontend: FrontendParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn config_error(key: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    /// Parses and validates a JSON scenario. Errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            config_error(if key == "." { "<root>" } else { &key }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.version != SCHEMA_VERSION {
            return Err(config_error(
                "version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.version
                ),
            ));
        }
        let s = &self.solver;
        if !(s.epsilon >= 0.0 && s.epsilon.is_finite()) {
            return Err(config_error(
                "solver.epsilon",
                format!("must be finite and >= 0, got {}", s.epsilon),
            ));
        }
        if !(s.mu > 0.0 && s.mu.is_finite()) {
            return Err(config_error("solver.mu", format!("must be positive, got {}", s.mu)));
        }
        if !(s.max_gap >= 0.0 && s.max_gap.is_finite()) {
            return Err(config_error(
                "solver.max_gap",
                format!("must be finite and >= 0, got {}", s.max_gap),
            ));
        }
        if !(s.anchor_weight > 0.0 && s.anchor_weight.is_finite()) {
            return Err(config_error(
                "solver.anchor_weight",
                format!("must be positive, got {}", s.anchor_weight),
            ));
        }
        if s.residual_norm != ResidualNorm::L2 {
            return Err(config_error(
                "solver.residual_norm",
                format!("{:?} residual balls are not supported; use \"l2\"", s.residual_norm).to_lowercase(),
            ));
        }
        if !(s.admm.relaxation > 0.0 && s.admm.relaxation < 2.0) {
            return Err(config_error("solver.admm.relaxation", "must lie in (0, 2)"));
        }
        if !(s.admm.rho > 0.0 && s.admm.sigma > 0.0) || s.admm.check_every == 0 {
            return Err(config_error(
                "solver.admm",
                "rho, sigma and check_every must be positive",
            ));
        }
        self.noise
            .validate()
            .map_err(|e| config_error("noise", e.to_string()))?;
        if s.weighting == WeightingChoice::Noise && !(self.noise.range_sigma > 0.0 && self.noise.odom_sigma > 0.0) {
            return Err(config_error(
                "solver.weighting",
                "noise weighting needs positive noise.range_sigma and noise.odom_sigma",
            ));
        }
        self.frontend
            .labels
            .validate()
            .map_err(|e| config_error("frontend.labels", e.to_string()))?;
        self.frontend
            .segments
            .validate()
            .map_err(|e| config_error("frontend.segments", e.to_string()))?;
        self.sensor
            .intrinsics()
            .validate()
            .map_err(|e| config_error("sensor", e.to_string()))?;
        if !(self.sensor.max_range > 0.0) {
            return Err(config_error("sensor.max_range", "must be positive"));
        }
        Ok(())
    }

    pub fn weighting(&self) -> Weighting {
        match self.solver.weighting {
            WeightingChoice::Unweighted => Weighting::Unweighted,
            WeightingChoice::Noise => Weighting::FromNoise {
                range_sigma: self.noise.range_sigma,
                odom_sigma: self.noise.odom_sigma,
            },
        }
    }
}

/// Scenarios shipped with the crate, by name.
pub const BUNDLED_SCENARIOS: [(&str, &str); 5] = [
    ("corridor_loop", include_str!("../../scenarios/corridor_loop.json")),
    (
        "corridor_loop_depth",
        include_str!("../../scenarios/corridor_loop_depth.json"),
    ),
    ("square_loop", include_str!("../../scenarios/square_loop.json")),
    ("glass_hall", include_str!("../../scenarios/glass_hall.json")),
    ("replica", include_str!("../../scenarios/replica.json")),
];

pub fn bundled_scenario(name: &str) -> Result<ScenarioConfig, PipelineError> {
    let (_, text) = BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| config_error("name", format!("no bundled scenario named {name:?}")))?;
    ScenarioConfig::from_json(text)
}
