//! Synthetic Manhattan worlds, trajectories, odometry, direct range measurements and
//! ray-cast depth frames.

mod depth;
mod noise;
mod range;
mod trajectory;
mod world;

use thiserror::Error;

pub use depth::{
    back_project, render_depth_frame, render_depth_frame_with, DepthImage, Intrinsics, RenderOptions, RenderedFrame,
};
pub use noise::{rng_for, simulate_odometry, simulate_vio, streams, NoiseSpec, VioOdometry};
pub use range::{simulate_range_measurements, visible_patch, SensorModel, VisiblePatch};
pub use trajectory::{generate_trajectory, FramePose, GroundTruthTrajectory, TrajectorySpec};
pub use world::{
    generate_world, Aabb, Door, LayoutPlaneGroup, ManhattanWorld, Primitive, WallSide, WorldPlane, WorldSpec,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("world spec produced no planes")]
    NoPlanes,
    #[error("planes {a} and {b} are contradictory: same axis and offset, opposite facing, overlapping extent")]
    ContradictoryPlanes { a: usize, b: usize },
    #[error("primitive {index}: {reason}")]
    InvalidPrimitive { index: usize, reason: String },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth image format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
