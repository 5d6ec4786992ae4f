use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labeling::{aligned_points, AxisLabelImage};
use super::FrontendError;
use crate::geometry::{in_plane_coords, Axis, Facing, Rect, Vec3};
use crate::observation::SegmentObservation;
use crate::sim::{rng_for, streams, DepthImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentParams {
    pub min_inliers: usize,
    /// Minimum bounding-rectangle area (m²) of a kept segment.
    pub min_extent: f64,
    pub ransac_iterations: usize,
    pub inlier_threshold: f64,
    /// Planes fitted per connected component before giving up on the remainder.
    pub max_planes_per_component: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            min_inliers: 50,
            min_extent: 0.25,
            ransac_iterations: 100,
            inlier_threshold: 0.03,
            max_planes_per_component: 4,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<(), FrontendError> {
        if self.min_inliers == 0 || self.ransac_iterations == 0 || self.max_planes_per_component == 0 {
            return Err(FrontendError::InvalidParams(
                "min_inliers, ransac_iterations and max_planes_per_component must be positive".into(),
            ));
        }
        if !(self.inlier_threshold > 0.0) || !(self.min_extent >= 0.0) {
            return Err(FrontendError::InvalidParams(
                "inlier_threshold must be positive, min_extent non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn within(values: &[f64], candidates: &[usize], offset: f64, tol: f64) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| (values[i] - offset).abs() <= tol)
        .collect()
}

/// One-parameter RANSAC over `values[candidates]`: each hypothesis is a sampled value, the
/// winner's inliers are refit by their median and re-gathered.
///
/// Returns the refit offset and the indices within `tol` of it, or `None` for an empty candidate set.
pub fn ransac_offset<R: Rng>(
    values: &[f64],
    candidates: &[usize],
    iterations: usize,
    tol: f64,
    rng: &mut R,
) -> Option<(f64, Vec<usize>)> {
    if candidates.is_empty() {
        return None;
    }
    let mut best = (0usize, 0.0);
    for _ in 0..iterations {
        let h = values[candidates[rng.random_range(0..candidates.len())]];
        let count = candidates.iter().filter(|&&i| (values[i] - h).abs() <= tol).count();
        if count > best.0 {
            best = (count, h);
        }
    }
    let first = within(values, candidates, best.1, tol);
    let mut vals: Vec<f64> = first.iter().map(|&i| values[i]).collect();
    let m = median(&mut vals);
    let inliers = within(values, candidates, m, tol);
    let mut vals: Vec<f64> = inliers.iter().map(|&i| values[i]).collect();
    Some((median(&mut vals), inliers))
}

/// 4-connected components of pixels sharing an axis label, in raster order of their first pixel.
fn components(labels: &AxisLabelImage) -> Vec<(Axis, Vec<usize>)> {
    let (w, h) = (labels.width, labels.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        let Some(axis) = labels.labels[start].axis() else {
            continue;
        };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if !seen[j] && labels.labels[j] == labels.labels[start] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        members.sort_unstable();
        out.push((axis, members));
    }
    out
}

/// Layout segments of one frame: connected components of each axis label, each split by
/// sequential offset-only RANSAC into planar fragments in the yaw-aligned sensor frame.
///
/// Segment ids are assigned consecutively from `first_id`. `seed` drives RANSAC sampling.
pub fn extract_segments(
    labels: &AxisLabelImage,
    depth: &DepthImage,
    yaw: f64,
    params: &SegmentParams,
    seed: u64,
    first_id: usize,
) -> Result<Vec<SegmentObservation>, FrontendError> {
    params.validate()?;
    if labels.width != depth.width || labels.height != depth.height {
        return Err(FrontendError::DimensionMismatch(format!(
            "labels {}x{} vs depth {}x{}",
            labels.width, labels.height, depth.width, depth.height
        )));
    }
    let points = aligned_points(depth, yaw);
    let mut rng = rng_for(
        seed.wrapping_add((depth.frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        streams::RANSAC,
    );
    let mut out = Vec::new();
    for (axis, members) in components(labels) {
        let pts: Vec<Vec3> = members.iter().filter_map(|&i| points[i]).collect();
        if pts.len() < params.min_inliers {
            continue;
        }
        let values: Vec<f64> = pts.iter().map(|p| p[axis.index()]).collect();
        let mut remaining: Vec<usize> = (0..pts.len()).collect();
        for _ in 0..params.max_planes_per_component {
            if remaining.len() < params.min_inliers {
                break;
            }
            let Some((d, inliers)) = ransac_offset(
                &values,
                &remaining,
                params.ransac_iterations,
                params.inlier_threshold,
                &mut rng,
            ) else {
                break;
            };
            if inliers.len() < params.min_inliers {
                break;
            }
            let extent = Rect::bounding(inliers.iter().map(|&i| in_plane_coords(axis, &pts[i]))).unwrap();
            if extent.area() >= params.min_extent && d.abs() > 1e-6 {
                out.push(SegmentObservation {
                    segment_id: first_id + out.len(),
                    frame_index: depth.frame_index,
                    axis,
                    d,
                    facing: Facing::toward_sensor(d),
                    extent,
                    inlier_count: inliers.len(),
                    source_plane: None,
                });
            }
            let mut keep = vec![true; pts.len()];
            inliers.iter().for_each(|&i| keep[i] = false);
            remaining.retain(|&i| keep[i]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{label_axis_alignment, AxisLabel, LabelParams};
    use crate::sim::{generate_world, render_depth_frame, FramePose, Intrinsics, Primitive, WorldSpec};
    use rand_distr::{Distribution, Normal};

    fn wall_frame(extent: Rect) -> DepthImage {
        let world = generate_world(&WorldSpec {
            primitives: vec![Primitive::Plane {
                axis: Axis::X,
                offset: 2.0,
                facing: Facing::Negative,
                extent,
            }],
        })
        .unwrap();
        render_depth_frame(
            &world,
            &FramePose {
                p: [0.0, 0.0, 1.2],
                yaw: 0.0,
            },
            &Intrinsics::from_fov(60, 48, 100.0, 85.0),
            3,
        )
    }

    #[test]
    fn frontal_wall_gives_one_segment() {
        let img = wall_frame(Rect::new([-5.0, -1.0], [5.0, 4.0]));
        let labels = label_axis_alignment(&img, 0.0, &LabelParams::default()).unwrap();
        let segs = extract_segments(&labels, &img, 0.0, &SegmentParams::default(), 1, 10).unwrap();
        assert_eq!(segs.len(), 1);
        let s = &segs[0];
        assert_eq!(
            (s.axis, s.facing, s.segment_id, s.frame_index),
            (Axis::X, Facing::Negative, 10, 3)
        );
        assert!((s.d - 2.0).abs() < 1e-9);
        assert!(s.inlier_count >= 50);
    }

    #[test]
    fn tiny_component_dropped() {
        let img = wall_frame(Rect::new([-5.0, -1.0], [5.0, 4.0]));
        let mut labels = label_axis_alignment(&img, 0.0, &LabelParams::default()).unwrap();
        labels.labels.iter_mut().for_each(|l| *l = AxisLabel::Unknown);
        for i in [0, 1, 2] {
            labels.labels[i] = AxisLabel::Z;
        }
        let segs = extract_segments(&labels, &img, 0.0, &SegmentParams::default(), 1, 0).unwrap();
        assert!(segs.is_empty());
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let img = wall_frame(Rect::new([-5.0, -1.0], [5.0, 4.0]));
        let labels = AxisLabelImage {
            width: 2,
            height: 2,
            labels: vec![AxisLabel::X; 4],
        };
        assert!(matches!(
            extract_segments(&labels, &img, 0.0, &SegmentParams::default(), 1, 0),
            Err(FrontendError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ransac_resists_salt_outliers() {
        let sigma = 0.01;
        let mut rng = rng_for(9, 0);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut values: Vec<f64> = (0..900).map(|_| 2.5 + noise.sample(&mut rng)).collect();
        values.extend((0..100).map(|_| rng.random_range(-6.0..6.0)));
        let idx: Vec<usize> = (0..values.len()).collect();
        let (d, inliers) = ransac_offset(&values, &idx, 100, 0.03, &mut rng).unwrap();
        assert!((d - 2.5).abs() <= 3.0 * sigma, "{d}");
        assert!(inliers.len() >= 850);
    }
}
