//! Scenario configuration, end-to-end runs, evaluation metrics and map export.

mod config;
mod export;
mod metrics;
mod recording;
mod run;

use std::path::Path;

use thiserror::Error;

use crate::frontend::FrontendError;
use crate::graph::GraphError;
use crate::sim::SimError;
use crate::solver::SolverError;

pub use config::{
    bundled_scenario, EvaluationConfig, Mode, ResidualNorm, ScenarioConfig, SolverConfig, SurfacePairSpec,
    WeightingChoice, BUNDLED_SCENARIOS, SCHEMA_VERSION,
};
pub use export::{export_map, render_svg, MapFormat, MapModel};
pub use metrics::{
    attribute_segments, attribute_structures, complexity_reduction, compute_drift, integrate, integrate_vio,
    max_offset_error, plane_groups, positions_from_xi, structure_for_offset, surface_distance_check,
    true_planes_observed, StructureTruth, SurfacePair, SurfaceRow, SurfaceTable,
};
pub use recording::{Recording, FRAMES_DIR, ODOMETRY_FILE};
pub use run::{
    run_frontend, run_on, run_pipeline, simulate, FrontendResult, Overrides, ReconstructionReport, RunOutput,
    Simulation, Stage, StageDrift, Timing,
};

/// Optimization step an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStage {
    LeastSquares,
    Selection,
    Resolve,
}

impl std::fmt::Display for SolveStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStage::LeastSquares => "least-squares",
            SolveStage::Selection => "selection",
            SolveStage::Resolve => "re-solve",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("simulate: {0}")]
    Simulate(#[from] SimError),
    #[error("frontend: {0}")]
    Frontend(#[from] FrontendError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("{stage}: {source}")]
    Solver {
        stage: SolveStage,
        #[source]
        source: SolverError,
    },
    #[error("evaluate: {0}")]
    Evaluate(String),
    #[error("export: unknown map format {0:?} (expected svg or json)")]
    UnknownFormat(String),
    #[error("export: {0}")]
    Export(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
