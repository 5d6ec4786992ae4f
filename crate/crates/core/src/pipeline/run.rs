use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{Mode, ScenarioConfig};
use super::export::{export_map, MapFormat, MapModel};
use super::metrics::{
    attribute_segments, attribute_structures, complexity_reduction, compute_drift, integrate, integrate_vio,
    max_offset_error, plane_groups, positions_from_xi, structure_for_offset, surface_distance_check,
    true_planes_observed, StructureTruth, SurfacePair, SurfaceTable,
};
use super::{PipelineError, SolveStage};
use crate::frontend::{process_sequence, track_observations};
use crate::geometry::Vec3;
use crate::graph::{
    assemble_measurement_system, build_equivalence_matrix, build_graph, generate_hypotheses, FactorGraph, Hypothesis,
    SparseSystem,
};
use crate::observation::{CorrespondenceEdge, SegmentObservation};
use crate::sim::{
    generate_trajectory, generate_world, render_depth_frame_with, simulate_odometry, simulate_range_measurements,
    simulate_vio, DepthImage, GroundTruthTrajectory, ManhattanWorld, RenderOptions, VioOdometry,
};
use crate::solver::{
    compute_delta, constrained_least_squares, fit_within_ball, model_extents, solve_least_squares,
    solve_sparse_selection, threshold_equivalences, ColumnMap, ConvexSolution, LayoutStructure, LsqSolution, MergeSet,
    ResolvedModel, FEAS_TOL,
};

/// Last optimization stage to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Registration only: compass-aligned odometry, no optimization.
    Reg,
    /// Least squares over the tracked slots.
    Ls,
    /// Equivalence selection and the collapsed re-solve.
    #[default]
    Convex,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reg" => Ok(Stage::Reg),
            "ls" => Ok(Stage::Ls),
            "convex" => Ok(Stage::Convex),
            _ => Err(format!("unknown stage {s:?} (expected reg, ls or convex)")),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Reg => "reg",
            Stage::Ls => "ls",
            Stage::Convex => "convex",
        })
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    pub max_gap: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<(), PipelineError> {
        if let Some(s) = self.seed {
            cfg.noise.seed = s;
        }
        if let Some(e) = self.epsilon {
            cfg.solver.epsilon = e;
        }
        if let Some(m) = self.mu {
            cfg.solver.mu = m;
        }
        if let Some(g) = self.max_gap {
            cfg.solver.max_gap = g;
        }
        cfg.validate()
    }
}

/// Ground truth and raw sensor data of one simulated run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: ManhattanWorld,
    pub truth: GroundTruthTrajectory,
    /// Noisy translations in the axis-aligned frame.
    pub odometry: Vec<Vec3>,
    pub vio: VioOdometry,
    /// Direct range observations (range mode only).
    pub observations: Vec<SegmentObservation>,
    /// Rendered frames (depth mode only).
    pub frames: Vec<DepthImage>,
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation, PipelineError> {
    let world = generate_world(&cfg.world)?;
    let truth = generate_trajectory(&cfg.trajectory, &world)?;
    cfg.noise.validate()?;
    let odometry = simulate_odometry(&truth, &cfg.noise);
    let vio = simulate_vio(&truth, &cfg.noise);
    let (observations, frames) = match cfg.mode {
        Mode::Range => (
            simulate_range_measurements(&world, &truth, &cfg.noise, &cfg.sensor),
            Vec::new(),
        ),
        Mode::Depth => {
            let intr = cfg.sensor.intrinsics();
            intr.validate()?;
            let opts = RenderOptions {
                max_range: cfg.sensor.max_range,
                noise_ratio: cfg.noise.depth_sigma_ratio,
                seed: cfg.noise.seed,
            };
            let frames = truth
                .poses
                .iter()
                .enumerate()
                .map(|(i, pose)| render_depth_frame_with(&world, pose, &intr, &opts, i).image)
                .collect();
            (Vec::new(), frames)
        }
    };
    Ok(Simulation {
        world,
        truth,
        odometry,
        vio,
        observations,
        frames,
    })
}

/// Segments, tracks and the aligned motion the graph is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendResult {
    pub segments: Vec<SegmentObservation>,
    pub edges: Vec<CorrespondenceEdge>,
    pub motions: Vec<Vec3>,
    /// Per-frame compass estimates (depth mode).
    pub compass_yaws: Option<Vec<Option<f64>>>,
}

pub fn run_frontend(cfg: &ScenarioConfig, sim: &Simulation) -> Result<FrontendResult, PipelineError> {
    match cfg.mode {
        Mode::Range => {
            let edges = track_observations(&sim.observations, &sim.odometry, &cfg.frontend.correspondence);
            Ok(FrontendResult {
                segments: sim.observations.clone(),
                edges,
                motions: sim.odometry.clone(),
                compass_yaws: None,
            })
        }
        Mode::Depth => {
            let out = process_sequence(&sim.frames, &sim.vio, &cfg.frontend, cfg.noise.seed)?;
            let mut segments = out.segments;
            attribute_segments(&mut segments, &sim.world, &sim.truth, 0.1);
            Ok(FrontendResult {
                segments,
                edges: out.edges,
                motions: out.motions,
                compass_yaws: Some(out.compass_yaws),
            })
        }
    }
}

/// Trajectory endpoint drift (m) after each stage; `None` when not applicable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDrift {
    /// Dead reckoning from body-frame odometry and relative yaw.
    pub raw_odometry: Option<f64>,
    /// Translations rotated into the axis-aligned frame.
    pub compass_aligned: Option<f64>,
    pub least_squares: Option<f64>,
    pub convex: Option<f64>,
}

/// Summary of one run. Serializes deterministically; wall time is kept out of the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub stage: Stage,
    pub frames: usize,
    pub path_length: f64,
    pub loop_closed: bool,
    pub drift: StageDrift,
    pub observations: usize,
    /// Plane slots after temporal tracking.
    pub initial_segments: usize,
    pub true_planes_observed: usize,
    pub hypotheses_considered: Option<usize>,
    pub hypotheses_accepted: Option<usize>,
    pub final_structures: Option<usize>,
    pub complexity_reduction: Option<f64>,
    pub residual_lin: Option<f64>,
    pub delta: Option<f64>,
    pub convex_objective: Option<f64>,
    pub convex_converged: Option<bool>,
    pub convex_iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub final_max_violation: Option<f64>,
    /// Structures whose segments come from more than one true plane.
    pub impure_structures: Option<usize>,
    pub max_offset_error: Option<f64>,
    pub surface_distances: Option<SurfaceTable>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub optimization_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub least_squares: f64,
    pub selection: f64,
    pub resolve: f64,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.least_squares + self.selection + self.resolve
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub stage: Stage,
    pub sim: Simulation,
    pub frontend: FrontendResult,
    pub graph: FactorGraph,
    pub system: SparseSystem<f64>,
    pub lsq: Option<LsqSolution<f64>>,
    pub hypotheses: Vec<Hypothesis>,
    pub delta: Option<f64>,
    pub convex: Option<ConvexSolution<f64>>,
    pub merges: Option<MergeSet>,
    pub resolved: Option<ResolvedModel<f64>>,
    pub structures: Vec<LayoutStructure>,
    pub structure_truth: Vec<StructureTruth>,
    /// Estimated positions of the last stage that ran.
    pub positions: Vec<Vec3>,
    pub timing: Timing,
    pub report: ReconstructionReport,
}

fn solver_err(stage: SolveStage) -> impl FnOnce(crate::solver::SolverError) -> PipelineError {
    move |source| PipelineError::Solver { stage, source }
}

/// Simulates, runs the front-end and optimizes up to `stage`.
pub fn run_pipeline(cfg: &ScenarioConfig, stage: Stage) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let sim = simulate(cfg)?;
    run_on(cfg, stage, sim)
}

/// Runs the front-end and optimization on given sensor data, e.g. a loaded recording. The
/// world and trajectory in `sim` serve as ground truth for the evaluation only.
pub fn run_on(cfg: &ScenarioConfig, stage: Stage, sim: Simulation) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    info!("scenario {} ({:?} mode, seed {})", cfg.name, cfg.mode, cfg.noise.seed);
    let frontend = run_frontend(cfg, &sim)?;
    info!(
        "{} segments, {} temporal edges",
        frontend.segments.len(),
        frontend.edges.len()
    );
    let mut graph = build_graph(&frontend.segments, &frontend.edges, &frontend.motions)?;
    let mut system = assemble_measurement_system::<f64>(&graph, cfg.solver.anchor_weight, &cfg.weighting())?;
    let n_frames = graph.n_frames;
    let n_slots = graph.slots.len();
    let mut warnings = Vec::new();
    let mut timing = Timing::default();

    let registered = integrate([0.0; 3], &frontend.motions);
    let mut positions = registered.clone();
    let mut lsq = None;
    let mut hypotheses = Vec::new();
    let mut delta = None;
    let mut convex = None;
    let mut merges = None;
    let mut resolved = None;
    let mut structures = Vec::new();
    let mut ls_positions = None;

    if stage >= Stage::Ls {
        let a = system.a.to_csr();
        let t0 = Instant::now();
        let ls = solve_least_squares(&a, &system.b).map_err(solver_err(SolveStage::LeastSquares))?;
        timing.least_squares = t0.elapsed().as_secs_f64();
        info!("least squares: residual {:.4}", ls.residual);
        hypotheses = generate_hypotheses(&graph, &ls.xi, cfg.solver.max_gap)?;
        graph.hypotheses = hypotheses.clone();
        system.e = build_equivalence_matrix(&hypotheses, &system.index);
        positions = positions_from_xi(&ls.xi, n_frames);
        ls_positions = Some(positions.clone());

        if stage == Stage::Ls {
            let none = MergeSet::from_accepted(&hypotheses, Vec::new(), n_slots);
            structures =
                model_extents(&graph, &ls.xi, &frontend.segments, &none).map_err(solver_err(SolveStage::Resolve))?;
        } else {
            let d = system.d.to_csr();
            let e = system.e.to_csr();
            let t1 = Instant::now();
            let mut dl = compute_delta(ls.residual, cfg.solver.epsilon).map_err(solver_err(SolveStage::Selection))?;
            let guard = constrained_least_squares(&a, &system.b, &d, &ColumnMap::identity(a.ncols()))
                .map_err(solver_err(SolveStage::Selection))?;
            if guard.residual > dl {
                let raised = (1.0 + cfg.solver.epsilon) * guard.residual;
                let msg = format!(
                    "topology constraints lift the minimum residual to {:.6} above delta {:.6}; delta raised to {:.6}",
                    guard.residual, dl, raised
                );
                warn!("{msg}");
                warnings.push(msg);
                dl = raised;
            }
            info!("selection over {} hypotheses, delta {:.4}", hypotheses.len(), dl);
            let sol = solve_sparse_selection(&e, &a, &system.b, dl, &d, &cfg.solver.admm)
                .map_err(solver_err(SolveStage::Selection))?;
            timing.selection = t1.elapsed().as_secs_f64();
            if !sol.converged {
                let msg = format!(
                    "selection stopped after {} iterations without a KKT certificate; merges come from the last iterate",
                    sol.iterations
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            let m = threshold_equivalences(&e, &sol.xi, cfg.solver.mu, &hypotheses, n_slots)
                .map_err(solver_err(SolveStage::Resolve))?;
            let t2 = Instant::now();
            let gaps = e.mul_vec(&sol.xi);
            let fit =
                fit_within_ball(&graph, &system, &gaps, &m, dl, FEAS_TOL).map_err(solver_err(SolveStage::Resolve))?;
            timing.resolve = t2.elapsed().as_secs_f64();
            if !fit.dropped.is_empty() {
                let msg = format!(
                    "{} thresholded merges dropped to keep the re-solved residual within delta",
                    fit.dropped.len()
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            let (m, r) = (fit.merges, fit.resolved);
            if !r.converged {
                let msg = "collapsed re-solve hit its iteration limit".to_string();
                warn!("{msg}");
                warnings.push(msg);
            }
            info!(
                "{} of {} hypotheses accepted, {} structures",
                m.accepted.len(),
                hypotheses.len(),
                r.n_structures()
            );
            structures =
                model_extents(&graph, &r.xi, &frontend.segments, &m).map_err(solver_err(SolveStage::Resolve))?;
            positions = positions_from_xi(&r.xi, n_frames);
            delta = Some(dl);
            convex = Some(sol);
            merges = Some(m);
            resolved = Some(r);
        }
        lsq = Some(ls);
    }

    let (groups, of_plane) = plane_groups(&sim.world);
    let structure_truth = attribute_structures(&structures, &frontend.segments, &of_plane);
    let closed = sim.truth.closed;
    let drift = StageDrift {
        raw_odometry: compute_drift(&integrate_vio(&sim.vio), closed),
        compass_aligned: compute_drift(&registered, closed),
        least_squares: ls_positions.as_deref().and_then(|p| compute_drift(p, closed)),
        convex: resolved.as_ref().and_then(|_| compute_drift(&positions, closed)),
    };
    if let (Some(c), Some(l)) = (drift.convex, drift.least_squares) {
        if c > l {
            let msg = format!(
                "convex-stage drift {c:.3} m exceeds least-squares drift {l:.3} m; accepted merges likely include false equivalences"
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    let p0 = sim.truth.poses.first().map_or([0.0; 3], |p| p.p);
    let (surface_distances, max_err, impure) = if stage >= Stage::Ls {
        let mut pairs = Vec::new();
        for spec in &cfg.evaluation.surface_pairs {
            let a = structure_for_offset(spec.axis, spec.a, &structures, &structure_truth, &groups);
            let b = structure_for_offset(spec.axis, spec.b, &structures, &structure_truth, &groups);
            match (a, b) {
                (Some(a), Some(b)) => pairs.push(SurfacePair {
                    label: spec.label.clone(),
                    a,
                    b,
                    ground_truth: (spec.b - spec.a).abs(),
                }),
                _ => warnings.push(format!("surface pair {:?}: a plane was not reconstructed", spec.label)),
            }
        }
        let table = if cfg.evaluation.surface_pairs.is_empty() {
            None
        } else {
            Some(surface_distance_check(&structures, &pairs)?)
        };
        let impure = structure_truth.iter().filter(|t| t.foreign_segments > 0).count();
        (
            table,
            max_offset_error(&structures, &structure_truth, &groups, &p0),
            Some(impure),
        )
    } else {
        (None, None, None)
    };

    let final_structures = resolved.as_ref().map(|r| r.n_structures());
    let report = ReconstructionReport {
        scenario: cfg.name.clone(),
        mode: cfg.mode,
        seed: cfg.noise.seed,
        stage,
        frames: n_frames,
        path_length: sim.truth.path_length(),
        loop_closed: closed,
        drift,
        observations: frontend.segments.len(),
        initial_segments: n_slots,
        true_planes_observed: true_planes_observed(&frontend.segments, &of_plane),
        hypotheses_considered: lsq.as_ref().map(|_| hypotheses.len()),
        hypotheses_accepted: merges.as_ref().map(|m| m.accepted.len()),
        final_structures,
        complexity_reduction: final_structures.map(|f| complexity_reduction(n_slots, f)),
        residual_lin: lsq.as_ref().map(|l| l.residual),
        delta,
        convex_objective: convex.as_ref().map(|c| c.objective),
        convex_converged: convex.as_ref().map(|c| c.converged),
        convex_iterations: convex.as_ref().map(|c| c.iterations),
        final_residual: resolved.as_ref().map(|r| r.residual),
        final_max_violation: resolved.as_ref().map(|r| r.max_violation),
        impure_structures: impure,
        max_offset_error: max_err,
        surface_distances,
        warnings,
        optimization_seconds: timing.total(),
    };
    Ok(RunOutput {
        config: cfg.clone(),
        stage,
        sim,
        frontend,
        graph,
        system,
        lsq,
        hypotheses,
        delta,
        convex,
        merges,
        resolved,
        structures,
        structure_truth,
        positions,
        timing,
        report,
    })
}

impl RunOutput {
    pub fn map(&self) -> MapModel {
        MapModel {
            structures: self.structures.clone(),
            poses: self.positions.clone(),
        }
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    /// Writes `report.json`, `map.svg`, `map.json`, `segments.json`, `system.json` and
    /// `solution.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let map = self.map();
        let labels: Vec<String> = (0..self.system.index.dim())
            .map(|c| self.system.index.label(c))
            .collect();
        let files: [(&str, String); 6] = [
            ("report.json", self.report_json()),
            ("map.svg", export_map(&map, MapFormat::Svg)),
            ("map.json", export_map(&map, MapFormat::Json)),
            (
                "segments.json",
                to_json(&serde_json::json!({
                    "segments": self.frontend.segments,
                    "edges": self.frontend.edges,
                    "motions": self.frontend.motions,
                    "compass_yaws": self.frontend.compass_yaws,
                })),
            ),
            (
                "system.json",
                to_json(&serde_json::json!({
                    "columns": labels,
                    "system": self.system,
                    "hypotheses": self.hypotheses,
                })),
            ),
            (
                "solution.json",
                to_json(&serde_json::json!({
                    "stage": self.stage,
                    "columns": labels,
                    "least_squares": self.lsq,
                    "delta": self.delta,
                    "selection": self.convex,
                    "accepted_hypotheses": self.merges.as_ref().map(|m| &m.accepted),
                    "classes": self.merges.as_ref().map(|m| &m.classes),
                    "resolved": self.resolved,
                    "timing": self.timing,
                })),
            ),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
        }
        Ok(())
    }
}

fn to_json(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}
