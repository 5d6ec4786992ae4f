//! The sparse systems against a dense reading of the measurement equations.

use manhattan_layout::geometry::{Axis, Facing, Rect};
use manhattan_layout::graph::{assemble_measurement_system, build_graph, generate_hypotheses, Weighting};
use manhattan_layout::observation::{CorrespondenceEdge, EdgeKind, SegmentObservation};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    odometry: Vec<[f64; 3]>,
    /// (frame, axis, d, facing, track)
    sightings: Vec<(usize, usize, f64, bool, usize)>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..6).prop_flat_map(|frames| {
        let odom = prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), frames - 1);
        let sight = prop::collection::vec((0..frames, 0usize..3, -4.0f64..4.0, any::<bool>(), 0usize..4), 1..12);
        (odom, sight).prop_map(|(odometry, sightings)| Instance { odometry, sightings })
    })
}

fn segments(inst: &Instance) -> (Vec<SegmentObservation>, Vec<CorrespondenceEdge>) {
    let segs: Vec<SegmentObservation> = inst
        .sightings
        .iter()
        .enumerate()
        .map(|(i, &(frame, axis, d, pos, _))| SegmentObservation {
            segment_id: 100 + i,
            frame_index: frame,
            axis: Axis::ALL[axis],
            d,
            facing: if pos { Facing::Positive } else { Facing::Negative },
            extent: Rect::new([0.0, 0.0], [1.0, 1.0]),
            inlier_count: 60,
            source_plane: None,
        })
        .collect();
    // Sightings with the same track, axis and facing are chained by temporal edges.
    let mut edges = Vec::new();
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let (a, b) = (&inst.sightings[i], &inst.sightings[j]);
            if a.4 == b.4 && a.1 == b.1 && a.3 == b.3 {
                edges.push(CorrespondenceEdge {
                    segment_id_a: segs[i].segment_id,
                    segment_id_b: segs[j].segment_id,
                    axis: segs[i].axis,
                    kind: EdgeKind::Temporal,
                });
                break;
            }
        }
    }
    (segs, edges)
}

proptest! {
    #[test]
    fn sparse_assembly_matches_dense_equations(inst in instance(), w in 1.0f64..1e4) {
        let (segs, edges) = segments(&inst);
        let graph = build_graph(&segs, &edges, &inst.odometry).unwrap();
        let sys = assemble_measurement_system::<f64>(&graph, w, &Weighting::Unweighted).unwrap();
        let n_frames = inst.odometry.len() + 1;
        let idx = sys.index.clone();
        let dim = 3 * n_frames + graph.slots.len();
        prop_assert_eq!(idx.dim(), dim);

        // Slot of each segment: segments sharing (track, axis, facing) share one.
        let slot_of = |i: usize| graph.slot_of_segment(segs[i].segment_id).unwrap();
        for i in 0..segs.len() {
            for j in 0..segs.len() {
                let (a, b) = (&inst.sightings[i], &inst.sightings[j]);
                let same = a.4 == b.4 && a.1 == b.1 && a.3 == b.3;
                prop_assert_eq!(same, slot_of(i) == slot_of(j));
            }
        }

        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for (i, s) in segs.iter().enumerate() {
            let mut r = vec![0.0; dim];
            r[3 * n_frames + slot_of(i)] = 1.0;
            r[3 * s.frame_index + s.axis.index()] = -1.0;
            rows.push((r, s.d));
        }
        for (k, t) in inst.odometry.iter().enumerate() {
            for c in 0..3 {
                let mut r = vec![0.0; dim];
                r[3 * (k + 1) + c] = 1.0;
                r[3 * k + c] = -1.0;
                rows.push((r, t[c]));
            }
        }
        for c in 0..3 {
            let mut r = vec![0.0; dim];
            r[c] = w;
            rows.push((r, 0.0));
        }
        let dense = sys.a.to_csr().to_dense();
        // Range rows follow the graph's factor order, which may differ from segment order.
        let mut expected = Vec::new();
        for f in &graph.range_factors {
            let i = segs.iter().position(|s| s.segment_id == f.segment_id).unwrap();
            expected.push(rows[i].clone());
        }
        expected.extend(rows[segs.len()..].iter().cloned());
        prop_assert_eq!(dense.len(), expected.len());
        for (k, (row, rhs)) in expected.iter().enumerate() {
            prop_assert_eq!(&dense[k], row);
            prop_assert_eq!(sys.b[k], *rhs);
        }

        // Topology rows keep each plane on the observed side: −sign(d)(m − p) ≤ 0.
        let d = sys.d.to_csr().to_dense();
        let observed: Vec<&(Vec<f64>, f64)> = expected[..segs.len()].iter().filter(|(_, rhs)| rhs.abs() >= 1e-6).collect();
        prop_assert_eq!(d.len(), observed.len());
        for (drow, (arow, rhs)) in d.iter().zip(observed) {
            let want: Vec<f64> = arow.iter().map(|v| -rhs.signum() * v).collect();
            prop_assert_eq!(drow, &want);
        }

        // Hypotheses: every same-axis, same-facing slot pair within the gap, as +1/−1 rows.
        let mut xi = vec![0.0; dim];
        for (s, v) in xi[3 * n_frames..].iter_mut().enumerate() {
            *v = 0.3 * s as f64;
        }
        let hyps = generate_hypotheses(&graph, &xi, 0.65).unwrap();
        let mut want = 0;
        for a in 0..graph.slots.len() {
            for b in a + 1..graph.slots.len() {
                let (sa, sb) = (&graph.slots[a], &graph.slots[b]);
                if sa.axis == sb.axis && sa.facing == sb.facing && (xi[3 * n_frames + a] - xi[3 * n_frames + b]).abs() <= 0.65 {
                    want += 1;
                    prop_assert!(hyps.iter().any(|h| h.a == a && h.b == b));
                }
            }
        }
        prop_assert_eq!(hyps.len(), want);
    }
}
