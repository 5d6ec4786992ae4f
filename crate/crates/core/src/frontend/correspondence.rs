use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::observation::{CorrespondenceEdge, EdgeKind, SegmentObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceParams {
    /// Intersection area over the smaller extent's area required for a match.
    pub overlap_min: f64,
    /// Largest allowed offset disagreement (m) after motion compensation.
    pub gate: f64,
}

impl Default for CorrespondenceParams {
    fn default() -> Self {
        Self {
            overlap_min: 0.3,
            gate: 0.15,
        }
    }
}

fn overlap_ratio(a: &SegmentObservation, b: &SegmentObservation, motion: &Vec3) -> f64 {
    let (u, v) = a.axis.in_plane();
    let shifted = b.extent.translated(motion[u.index()], motion[v.index()]);
    let smaller = a.extent.area().min(b.extent.area());
    match a.extent.intersection(&shifted) {
        Some(i) if smaller > 0.0 => i.area() / smaller,
        _ => 0.0,
    }
}

/// Temporal edges between segments of consecutive frames.
///
/// `motion` is the aligned-frame translation from the `prev` sensor position to the `curr`
/// one, so a plane at offset `d_a` from the first is expected at `d_a − motion[axis]` from the
/// second.
pub fn temporal_correspondences(
    prev: &[SegmentObservation],
    curr: &[SegmentObservation],
    motion: &Vec3,
    params: &CorrespondenceParams,
) -> Vec<CorrespondenceEdge> {
    let mut edges = Vec::new();
    for a in prev {
        for b in curr {
            if a.axis != b.axis || a.facing != b.facing {
                continue;
            }
            if (a.d - (b.d + motion[a.axis.index()])).abs() >= params.gate {
                continue;
            }
            if overlap_ratio(a, b, motion) >= params.overlap_min {
                edges.push(CorrespondenceEdge {
                    segment_id_a: a.segment_id,
                    segment_id_b: b.segment_id,
                    axis: a.axis,
                    kind: EdgeKind::Temporal,
                });
            }
        }
    }
    edges
}

/// Temporal edges over a whole sequence. `motions[i]` is the aligned translation from frame
/// `i` to frame `i + 1`; observations may come in any order.
pub fn track_observations(
    observations: &[SegmentObservation],
    motions: &[Vec3],
    params: &CorrespondenceParams,
) -> Vec<CorrespondenceEdge> {
    let n_frames = motions.len() + 1;
    let mut by_frame: Vec<Vec<SegmentObservation>> = vec![Vec::new(); n_frames];
    for o in observations.iter().filter(|o| o.frame_index < n_frames) {
        by_frame[o.frame_index].push(o.clone());
    }
    let mut edges = Vec::new();
    for i in 0..motions.len() {
        edges.extend(temporal_correspondences(
            &by_frame[i],
            &by_frame[i + 1],
            &motions[i],
            params,
        ));
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Axis, Facing, Rect};
    use proptest::prelude::*;

    fn seg(id: usize, axis: Axis, d: f64, extent: Rect) -> SegmentObservation {
        SegmentObservation {
            segment_id: id,
            frame_index: 0,
            axis,
            d,
            facing: Facing::toward_sensor(d),
            extent,
            inlier_count: 100,
            source_plane: None,
        }
    }

    /// Corridor along +x: side walls y = ±1, end wall x = 5, seen from x = `x`.
    fn corridor_view(x: f64, first_id: usize) -> Vec<SegmentObservation> {
        vec![
            seg(first_id, Axis::Y, 1.0, Rect::new([0.3, -1.2], [5.0 - x, 1.3])),
            seg(first_id + 1, Axis::Y, -1.0, Rect::new([0.3, -1.2], [5.0 - x, 1.3])),
            seg(first_id + 2, Axis::X, 5.0 - x, Rect::new([-1.0, -1.2], [1.0, 1.3])),
        ]
    }

    #[test]
    fn static_frames_match_identically() {
        let a = corridor_view(0.0, 0);
        let b = corridor_view(0.0, 3);
        let edges = temporal_correspondences(&a, &b, &[0.0; 3], &CorrespondenceParams::default());
        let pairs: Vec<_> = edges.iter().map(|e| (e.segment_id_a, e.segment_id_b)).collect();
        assert_eq!(pairs, vec![(0, 3), (1, 4), (2, 5)]);
    }

    #[test]
    fn forward_step_matches_walls() {
        let a = corridor_view(0.0, 0);
        let b = corridor_view(0.2, 3);
        assert!((b[2].d - (a[2].d - 0.2)).abs() < 1e-12);
        let edges = temporal_correspondences(&a, &b, &[0.2, 0.0, 0.0], &CorrespondenceParams::default());
        assert_eq!(edges.len(), 3);
        assert!(edges
            .iter()
            .all(|e| e.segment_id_b == e.segment_id_a + 3 && e.kind == EdgeKind::Temporal));
    }

    #[test]
    fn opposite_facing_never_matched() {
        let r = Rect::new([0.0, 0.0], [2.0, 2.0]);
        let a = vec![seg(0, Axis::X, 1.0, r)];
        let mut b = seg(1, Axis::X, 1.0, r);
        b.facing = Facing::Positive;
        assert!(temporal_correspondences(&a, &[b], &[0.0; 3], &CorrespondenceParams::default()).is_empty());
    }

    #[test]
    fn track_groups_by_frame() {
        let r = Rect::new([0.0, 0.0], [2.0, 2.0]);
        let mut obs = Vec::new();
        for f in 0..3 {
            let mut s = seg(f, Axis::X, 2.0, r);
            s.frame_index = f;
            obs.push(s);
        }
        let edges = track_observations(&obs, &[[0.0; 3]; 2], &CorrespondenceParams::default());
        assert_eq!(edges.len(), 2);
    }

    fn arb_seg(id: usize) -> impl Strategy<Value = SegmentObservation> {
        (
            0usize..2,
            -3.0f64..3.0,
            -2.0f64..2.0,
            -2.0f64..2.0,
            0.2f64..3.0,
            0.2f64..3.0,
        )
            .prop_map(move |(a, d, u, v, w, h)| seg(id, Axis::ALL[a], d, Rect::new([u, v], [u + w, v + h])))
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(
            a in proptest::collection::vec(arb_seg(0), 1..5),
            b in proptest::collection::vec(arb_seg(100), 1..5),
            m in proptest::array::uniform3(-0.3f64..0.3),
        ) {
            let a: Vec<_> = a.into_iter().enumerate().map(|(i, mut s)| { s.segment_id = i; s }).collect();
            let b: Vec<_> = b.into_iter().enumerate().map(|(i, mut s)| { s.segment_id = 100 + i; s }).collect();
            let p = CorrespondenceParams::default();
            let mut fwd: Vec<_> = temporal_correspondences(&a, &b, &m, &p).iter().map(|e| (e.segment_id_a, e.segment_id_b)).collect();
            let mut back: Vec<_> = temporal_correspondences(&b, &a, &[-m[0], -m[1], -m[2]], &p).iter().map(|e| (e.segment_id_b, e.segment_id_a)).collect();
            fwd.sort();
            back.sort();
            prop_assert_eq!(fwd, back);
        }
    }
}
