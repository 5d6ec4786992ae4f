use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{GraphError, ParameterIndex};
use crate::geometry::{Axis, Facing, Vec3};
use crate::observation::{CorrespondenceEdge, SegmentObservation};
use crate::union_find::DisjointSets;

/// A layout-plane hypothesis: one scalar offset shared by a set of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSlot {
    pub axis: Axis,
    pub facing: Facing,
    /// Segment ids assigned to this slot, ascending.
    pub segments: Vec<usize>,
}

/// `m_slot − p_frame[axis] = d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeFactor {
    pub frame: usize,
    pub slot: usize,
    pub axis: Axis,
    pub d: f64,
    pub segment_id: usize,
}

/// `p_{frame+1} − p_frame = t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomFactor {
    pub frame: usize,
    pub t: Vec3,
}

/// Candidate equivalence `m_a = m_b` between two slots on the same axis, `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hypothesis {
    pub axis: Axis,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub n_frames: usize,
    /// Plane slots ordered x, then y, then z; within an axis by first observation.
    pub slots: Vec<PlaneSlot>,
    pub range_factors: Vec<RangeFactor>,
    pub odom_factors: Vec<OdomFactor>,
    pub hypotheses: Vec<Hypothesis>,
}

impl FactorGraph {
    pub fn index(&self) -> ParameterIndex {
        ParameterIndex {
            n_frames: self.n_frames,
            slot_axes: self.slots.iter().map(|s| s.axis).collect(),
        }
    }

    /// Slot indices on one axis, ascending.
    pub fn slots_on(&self, axis: Axis) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.axis == axis)
            .map(|(i, _)| i)
    }

    pub fn slot_of_segment(&self, segment_id: usize) -> Option<usize> {
        self.range_factors
            .iter()
            .find(|f| f.segment_id == segment_id)
            .map(|f| f.slot)
    }
}

/// Groups segments into plane slots by the transitive closure of `edges` and adds one range
/// factor per segment and one odometry factor per consecutive frame pair.
///
/// The graph has `odometry.len() + 1` frames.
pub fn build_graph(
    segments: &[SegmentObservation],
    edges: &[CorrespondenceEdge],
    odometry: &[Vec3],
) -> Result<FactorGraph, GraphError> {
    let n_frames = odometry.len() + 1;
    let mut pos: HashMap<usize, usize> = HashMap::with_capacity(segments.len());
    for (i, s) in segments.iter().enumerate() {
        if pos.insert(s.segment_id, i).is_some() {
            return Err(GraphError::DuplicateSegment(s.segment_id));
        }
        if s.frame_index >= n_frames {
            return Err(GraphError::FrameOutOfRange {
                segment: s.segment_id,
                frame: s.frame_index,
                n_frames,
            });
        }
    }
    let mut sets = DisjointSets::new(segments.len());
    for e in edges {
        let ia = *pos
            .get(&e.segment_id_a)
            .ok_or(GraphError::UnknownSegment(e.segment_id_a))?;
        let ib = *pos
            .get(&e.segment_id_b)
            .ok_or(GraphError::UnknownSegment(e.segment_id_b))?;
        let (sa, sb) = (&segments[ia], &segments[ib]);
        if sa.axis != sb.axis || sa.axis != e.axis {
            return Err(GraphError::CrossAxisEdge {
                a: sa.segment_id,
                b: sb.segment_id,
                axis_a: sa.axis,
                axis_b: sb.axis,
            });
        }
        if sa.facing != sb.facing {
            return Err(GraphError::FacingMismatch {
                a: sa.segment_id,
                b: sb.segment_id,
            });
        }
        sets.union(ia, ib);
    }
    // Classes come ordered by their first member; a stable sort by axis keeps that within an axis.
    let mut classes = sets.classes();
    classes.sort_by_key(|c| segments[c[0]].axis.index());
    let mut slot_of = vec![0usize; segments.len()];
    let slots = classes
        .iter()
        .enumerate()
        .map(|(slot, members)| {
            let mut ids: Vec<usize> = members.iter().map(|&i| segments[i].segment_id).collect();
            ids.sort_unstable();
            members.iter().for_each(|&i| slot_of[i] = slot);
            PlaneSlot {
                axis: segments[members[0]].axis,
                facing: segments[members[0]].facing,
                segments: ids,
            }
        })
        .collect();
    let range_factors = segments
        .iter()
        .enumerate()
        .map(|(i, s)| RangeFactor {
            frame: s.frame_index,
            slot: slot_of[i],
            axis: s.axis,
            d: s.d,
            segment_id: s.segment_id,
        })
        .collect();
    let odom_factors = odometry
        .iter()
        .enumerate()
        .map(|(frame, &t)| OdomFactor { frame, t })
        .collect();
    Ok(FactorGraph {
        n_frames,
        slots,
        range_factors,
        odom_factors,
        hypotheses: Vec::new(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::observation::EdgeKind;

    pub(crate) fn seg(id: usize, frame: usize, axis: Axis, d: f64) -> SegmentObservation {
        SegmentObservation {
            segment_id: id,
            frame_index: frame,
            axis,
            d,
            facing: Facing::toward_sensor(d),
            extent: Rect::new([0.0, 0.0], [1.0, 1.0]),
            inlier_count: 100,
            source_plane: None,
        }
    }

    fn edge(a: usize, b: usize, axis: Axis) -> CorrespondenceEdge {
        CorrespondenceEdge {
            segment_id_a: a,
            segment_id_b: b,
            axis,
            kind: EdgeKind::Temporal,
        }
    }

    #[test]
    fn wall_seen_twice_is_one_slot() {
        let segs = [seg(0, 0, Axis::X, 2.0), seg(1, 1, Axis::X, 1.8)];
        let g = build_graph(&segs, &[edge(0, 1, Axis::X)], &[[0.2, 0.0, 0.0]]).unwrap();
        assert_eq!(g.slots.len(), 1);
        assert_eq!(g.range_factors.len(), 2);
        assert_eq!(g.slots[0].segments, vec![0, 1]);
    }

    #[test]
    fn no_edges_one_slot_per_segment_sorted_by_axis() {
        let segs = [
            seg(0, 0, Axis::Z, -1.2),
            seg(1, 0, Axis::X, 2.0),
            seg(2, 0, Axis::Y, 1.0),
            seg(3, 0, Axis::X, -2.0),
        ];
        let g = build_graph(&segs, &[], &[]).unwrap();
        let axes: Vec<Axis> = g.slots.iter().map(|s| s.axis).collect();
        assert_eq!(axes, vec![Axis::X, Axis::X, Axis::Y, Axis::Z]);
        assert_eq!(g.slot_of_segment(3), Some(1));
        assert_eq!(g.slot_of_segment(0), Some(3));
    }

    #[test]
    fn chain_is_transitive() {
        let segs = [
            seg(0, 0, Axis::Y, 1.0),
            seg(1, 1, Axis::Y, 1.0),
            seg(2, 2, Axis::Y, 1.0),
        ];
        let g = build_graph(&segs, &[edge(0, 1, Axis::Y), edge(1, 2, Axis::Y)], &[[0.0; 3]; 2]).unwrap();
        assert_eq!(g.slots.len(), 1);
        assert_eq!(g.slots[0].segments, vec![0, 1, 2]);
    }

    #[test]
    fn invalid_edges_rejected() {
        let segs = [
            seg(0, 0, Axis::X, 1.0),
            seg(1, 0, Axis::Y, 1.0),
            seg(2, 0, Axis::X, -1.0),
        ];
        assert!(matches!(
            build_graph(&segs, &[edge(0, 1, Axis::X)], &[]),
            Err(GraphError::CrossAxisEdge { .. })
        ));
        assert_eq!(
            build_graph(&segs, &[edge(0, 2, Axis::X)], &[]),
            Err(GraphError::FacingMismatch { a: 0, b: 2 })
        );
        assert_eq!(
            build_graph(&segs, &[edge(0, 9, Axis::X)], &[]),
            Err(GraphError::UnknownSegment(9))
        );
        assert!(matches!(
            build_graph(&[seg(0, 3, Axis::X, 1.0)], &[], &[]),
            Err(GraphError::FrameOutOfRange { .. })
        ));
    }
}
