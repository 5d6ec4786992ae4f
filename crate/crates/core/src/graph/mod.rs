//! Factor graph over frames and layout-plane slots, and its sparse linear systems:
//! measurements `A ξ = b`, equivalence hypotheses `E ξ = 0` and topology `D ξ ≤ 0`.

mod factor_graph;
mod index;
mod system;

use thiserror::Error;

use crate::geometry::Axis;

pub use factor_graph::{build_graph, FactorGraph, Hypothesis, OdomFactor, PlaneSlot, RangeFactor};
pub use index::{Entity, ParameterIndex};
pub use system::{
    assemble_measurement_system, build_equivalence_matrix, build_topology_constraints, generate_hypotheses, RowKind,
    SparseSystem, Weighting, DEFAULT_ANCHOR_WEIGHT, DEFAULT_MAX_GAP,
};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge joins segment {a} ({axis_a}) and segment {b} ({axis_b}) on different axes")]
    CrossAxisEdge {
        a: usize,
        b: usize,
        axis_a: Axis,
        axis_b: Axis,
    },
    #[error("edge joins opposite-facing segments {a} and {b}")]
    FacingMismatch { a: usize, b: usize },
    #[error("edge references unknown segment {0}")]
    UnknownSegment(usize),
    #[error("segment id {0} appears more than once")]
    DuplicateSegment(usize),
    #[error("segment {segment} references frame {frame} but there are {n_frames} frames")]
    FrameOutOfRange {
        segment: usize,
        frame: usize,
        n_frames: usize,
    },
    #[error("graph has no frames")]
    Empty,
    #[error("invalid weighting: {0}")]
    InvalidWeighting(String),
    #[error("initial estimate has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}
