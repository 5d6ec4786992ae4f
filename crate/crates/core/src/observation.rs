//! Layout segment observations and correspondence edges exchanged between the simulator,
//! the front-end and the factor graph.

use serde::{Deserialize, Serialize};

use crate::geometry::{Axis, Facing, Rect};

/// An axis-aligned planar fragment seen in one frame.
///
/// `d` is the signed offset from the sensor to the plane along `axis`, and `extent` is the
/// fragment's bounding rectangle in the plane's `(u, v)` coordinates relative to the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentObservation {
    pub segment_id: usize,
    pub frame_index: usize,
    pub axis: Axis,
    pub d: f64,
    pub facing: Facing,
    pub extent: Rect,
    pub inlier_count: usize,
    /// Index of the world plane that produced this segment, when known (simulation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_plane: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Temporal,
    Hypothesis,
}

/// Assertion that two segments lie on the same layout plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorrespondenceEdge {
    pub segment_id_a: usize,
    pub segment_id_b: usize,
    pub axis: Axis,
    pub kind: EdgeKind,
}
