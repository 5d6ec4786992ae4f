use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geometry::{add, norm, rotate_z, sub, Axis, Vec3};
use crate::observation::SegmentObservation;
use crate::sim::{GroundTruthTrajectory, LayoutPlaneGroup, ManhattanWorld, VioOdometry};
use crate::solver::LayoutStructure;

/// Start-to-end distance of a trajectory that physically returns to its start, or `None`
/// when the ground truth is not a closed loop.
pub fn compute_drift(positions: &[Vec3], closed: bool) -> Option<f64> {
    if !closed {
        return None;
    }
    match (positions.first(), positions.last()) {
        (Some(a), Some(b)) => Some(norm(&sub(b, a))),
        _ => None,
    }
}

/// Positions from chaining aligned translations off `start`.
pub fn integrate(start: Vec3, steps: &[Vec3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(start);
    for t in steps {
        let next = add(out.last().expect("non-empty"), t);
        out.push(next);
    }
    out
}

/// Dead reckoning from body-frame translations and integrated relative yaw.
pub fn integrate_vio(vio: &VioOdometry) -> Vec<Vec3> {
    let mut yaw = vio.initial_yaw;
    let mut steps = Vec::with_capacity(vio.body_translations.len());
    for (t, dyaw) in vio.body_translations.iter().zip(&vio.yaw_deltas) {
        steps.push(rotate_z(t, yaw));
        yaw += dyaw;
    }
    integrate([0.0; 3], &steps)
}

pub fn positions_from_xi(xi: &[f64], n_frames: usize) -> Vec<Vec3> {
    (0..n_frames)
        .map(|i| [xi[3 * i], xi[3 * i + 1], xi[3 * i + 2]])
        .collect()
}

/// `100 · (1 − final / initial)`.
pub fn complexity_reduction(initial: usize, final_count: usize) -> f64 {
    if initial == 0 {
        return 0.0;
    }
    100.0 * (1.0 - final_count as f64 / initial as f64)
}

/// Map from world plane index to its layout-plane group.
pub fn plane_groups(world: &ManhattanWorld) -> (Vec<LayoutPlaneGroup>, Vec<usize>) {
    let groups = world.layout_planes();
    let mut of_plane = vec![usize::MAX; world.planes.len()];
    for (g, group) in groups.iter().enumerate() {
        for &m in &group.members {
            of_plane[m] = g;
        }
    }
    (groups, of_plane)
}

/// Fills `source_plane` of segments from a front-end by matching each to the world plane on
/// its axis and facing whose offset is nearest to the segment's true-pose offset, preferring
/// planes whose extent contains the segment's centre. Segments further than `tol` from
/// every plane stay unattributed.
pub fn attribute_segments(
    segments: &mut [SegmentObservation],
    world: &ManhattanWorld,
    truth: &GroundTruthTrajectory,
    tol: f64,
) {
    for s in segments.iter_mut() {
        let Some(pose) = truth.poses.get(s.frame_index) else {
            continue;
        };
        let offset = pose.p[s.axis.index()] + s.d;
        let (u, v) = s.axis.in_plane();
        let cu = pose.p[u.index()] + 0.5 * (s.extent.min[0] + s.extent.max[0]);
        let cv = pose.p[v.index()] + 0.5 * (s.extent.min[1] + s.extent.max[1]);
        let mut best: Option<(bool, f64, usize)> = None;
        for (i, p) in world.planes.iter().enumerate() {
            if p.axis != s.axis || p.facing != s.facing {
                continue;
            }
            let err = (p.offset - offset).abs();
            if err > tol {
                continue;
            }
            let inside = p.extent.contains(cu, cv, 0.05);
            let better = match best {
                None => true,
                Some((bin, berr, _)) => (inside && !bin) || (inside == bin && err < berr - 1e-12),
            };
            if better {
                best = Some((inside, err, i));
            }
        }
        s.source_plane = best.map(|(_, _, i)| i);
    }
}

/// Number of distinct layout-plane groups among attributed segments.
pub fn true_planes_observed(segments: &[SegmentObservation], of_plane: &[usize]) -> usize {
    let mut seen: Vec<usize> = segments
        .iter()
        .filter_map(|s| s.source_plane)
        .map(|p| of_plane[p])
        .collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Ground-truth attribution of one structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureTruth {
    /// Majority layout-plane group of the member segments.
    pub group: Option<usize>,
    /// Member segments attributed to a different group.
    pub foreign_segments: usize,
}

pub fn attribute_structures(
    structures: &[LayoutStructure],
    segments: &[SegmentObservation],
    of_plane: &[usize],
) -> Vec<StructureTruth> {
    let by_id: std::collections::HashMap<usize, &SegmentObservation> =
        segments.iter().map(|s| (s.segment_id, s)).collect();
    structures
        .iter()
        .map(|st| {
            let groups: Vec<usize> = st
                .segments
                .iter()
                .filter_map(|id| by_id.get(id).and_then(|s| s.source_plane))
                .map(|p| of_plane[p])
                .collect();
            let mut counts: Vec<(usize, usize)> = Vec::new();
            for g in &groups {
                match counts.iter_mut().find(|(k, _)| k == g) {
                    Some(c) => c.1 += 1,
                    None => counts.push((*g, 1)),
                }
            }
            // Largest count, ties to the smaller group index.
            counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let group = counts.first().map(|c| c.0);
            let majority = counts.first().map_or(0, |c| c.1);
            StructureTruth {
                group,
                foreign_segments: groups.len() - majority,
            }
        })
        .collect()
}

/// Largest `|offset − true offset|` over attributed structures, in the frame anchored at the
/// true first pose.
pub fn max_offset_error(
    structures: &[LayoutStructure],
    truth: &[StructureTruth],
    groups: &[LayoutPlaneGroup],
    p0: &Vec3,
) -> Option<f64> {
    structures
        .iter()
        .zip(truth)
        .filter_map(|(s, t)| {
            t.group
                .map(|g| (s.offset - (groups[g].offset - p0[s.axis.index()])).abs())
        })
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub label: String,
    pub axis: Axis,
    pub structure_a: usize,
    pub structure_b: usize,
    pub ground_truth: f64,
    pub model: f64,
    /// `model − ground_truth`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTable {
    pub rows: Vec<SurfaceRow>,
    /// Mean of `|error| / ground_truth` over rows with a non-zero ground truth.
    pub mean_relative_error: f64,
}

/// A pair of structures and the true distance between the surfaces they model.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePair {
    pub label: String,
    pub a: usize,
    pub b: usize,
    pub ground_truth: f64,
}

/// Model distance `|offset_a − offset_b|` against ground truth for each pair.
pub fn surface_distance_check(
    structures: &[LayoutStructure],
    pairs: &[SurfacePair],
) -> Result<SurfaceTable, PipelineError> {
    let mut rows = Vec::with_capacity(pairs.len());
    for p in pairs {
        let get = |id: usize| {
            structures
                .iter()
                .find(|s| s.id == id)
                .ok_or_else(|| PipelineError::Evaluate(format!("pair {:?}: no structure {id}", p.label)))
        };
        let (a, b) = (get(p.a)?, get(p.b)?);
        if a.axis != b.axis {
            return Err(PipelineError::Evaluate(format!(
                "pair {:?} joins structure {} ({}) and structure {} ({}) on different axes",
                p.label, a.id, a.axis, b.id, b.axis
            )));
        }
        let model = (a.offset - b.offset).abs();
        rows.push(SurfaceRow {
            label: p.label.clone(),
            axis: a.axis,
            structure_a: a.id,
            structure_b: b.id,
            ground_truth: p.ground_truth,
            model,
            error: model - p.ground_truth,
        });
    }
    let rel: Vec<f64> = rows
        .iter()
        .filter(|r| r.ground_truth > 0.0)
        .map(|r| r.error.abs() / r.ground_truth)
        .collect();
    let mean_relative_error = if rel.is_empty() {
        0.0
    } else {
        rel.iter().sum::<f64>() / rel.len() as f64
    };
    Ok(SurfaceTable {
        rows,
        mean_relative_error,
    })
}

/// The structure standing for the true plane at `offset` on `axis`: the attributed structure
/// with the most segments among groups at that offset.
pub fn structure_for_offset(
    axis: Axis,
    offset: f64,
    structures: &[LayoutStructure],
    truth: &[StructureTruth],
    groups: &[LayoutPlaneGroup],
) -> Option<usize> {
    structures
        .iter()
        .zip(truth)
        .filter(|(s, t)| {
            s.axis == axis
                && t.group
                    .is_some_and(|g| groups[g].axis == axis && (groups[g].offset - offset).abs() < 1e-6)
        })
        .max_by(|(a, _), (b, _)| a.segments.len().cmp(&b.segments.len()).then(b.id.cmp(&a.id)))
        .map(|(s, _)| s.id)
}
