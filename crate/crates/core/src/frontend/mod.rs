//! Depth-frame processing: yaw estimation, per-pixel axis labels, layout segment extraction
//! and frame-to-frame segment correspondences.

mod compass;
mod correspondence;
mod labeling;
mod segments;
mod sequence;

use thiserror::Error;

pub use compass::{compass_objective, entropy_compass, fuse_orientation, DEFAULT_BIN_WIDTH};
pub use correspondence::{temporal_correspondences, track_observations, CorrespondenceParams};
pub use labeling::{aligned_points, label_axis_alignment, AxisLabel, AxisLabelImage, LabelParams};
pub use segments::{extract_segments, ransac_offset, SegmentParams};
pub use sequence::{process_sequence, CompassParams, FrontendOutput, FrontendParams};

#[derive(Debug, Error, PartialEq)]
pub enum FrontendError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
