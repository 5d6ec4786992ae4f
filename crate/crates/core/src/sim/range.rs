use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::noise::{normal, rng_for, streams};
use super::{FramePose, GroundTruthTrajectory, Intrinsics, ManhattanWorld, NoiseSpec, WorldPlane};
use crate::geometry::{in_plane_coords, rotate_z, Facing, Rect, Vec3};
use crate::observation::SegmentObservation;

fn default_hfov() -> f64 {
    100.0
}
fn default_vfov() -> f64 {
    85.0
}
fn default_range() -> f64 {
    6.0
}
fn default_width() -> usize {
    88
}
fn default_height() -> usize {
    72
}
fn default_min_pixels() -> usize {
    50
}
fn default_min_extent() -> f64 {
    0.25
}

/// Depth sensor geometry and the detectability thresholds shared with the front-end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    #[serde(default = "default_hfov")]
    pub hfov_deg: f64,
    #[serde(default = "default_vfov")]
    pub vfov_deg: f64,
    #[serde(default = "default_range")]
    pub max_range: f64,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_height")]
    pub height: usize,
    #[serde(default = "default_min_pixels")]
    pub min_pixels: usize,
    #[serde(default = "default_min_extent")]
    pub min_extent: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            hfov_deg: default_hfov(),
            vfov_deg: default_vfov(),
            max_range: default_range(),
            width: default_width(),
            height: default_height(),
            min_pixels: default_min_pixels(),
            min_extent: default_min_extent(),
        }
    }
}

impl SensorModel {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.width, self.height, self.hfov_deg, self.vfov_deg)
    }
}

/// Part of a plane inside the sensor's field of view and range.
#[derive(Debug, Clone, PartialEq)]
pub struct VisiblePatch {
    /// Signed offset `plane.offset − p[axis]`.
    pub d: f64,
    /// Bounding rectangle of the visible polygon, relative to the sensor position.
    pub extent: Rect,
    /// Approximate image footprint in pixels.
    pub pixel_area: f64,
}

/// Sutherland-Hodgman clip of a planar polygon against `f(q) >= 0`.
fn clip(poly: &[Vec3], f: impl Fn(&Vec3) -> f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let (fa, fb) = (f(a), f(b));
        if fa >= 0.0 {
            out.push(*a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let s = fa / (fa - fb);
            out.push([
                a[0] + s * (b[0] - a[0]),
                a[1] + s * (b[1] - a[1]),
                a[2] + s * (b[2] - a[2]),
            ]);
        }
    }
    out
}

fn shoelace(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Visible portion of `plane` from `pose`: facing test, field-of-view frustum and range.
/// Occlusion by other planes is ignored.
pub fn visible_patch(plane: &WorldPlane, pose: &FramePose, sensor: &SensorModel) -> Option<VisiblePatch> {
    let a = plane.axis.index();
    let d = plane.offset - pose.p[a];
    if plane.facing.sign() * (-d) <= 1e-9 || d.abs() >= sensor.max_range {
        return None;
    }
    let (u, v) = plane.axis.in_plane();
    let corners = [
        [plane.extent.min[0], plane.extent.min[1]],
        [plane.extent.max[0], plane.extent.min[1]],
        [plane.extent.max[0], plane.extent.max[1]],
        [plane.extent.min[0], plane.extent.max[1]],
    ];
    // Polygon relative to the sensor position.
    let mut poly: Vec<Vec3> = corners
        .iter()
        .map(|c| {
            let mut q = [0.0; 3];
            q[a] = d;
            q[u.index()] = c[0] - pose.p[u.index()];
            q[v.index()] = c[1] - pose.p[v.index()];
            q
        })
        .collect();

    let fwd = rotate_z(&[1.0, 0.0, 0.0], pose.yaw);
    let left = rotate_z(&[0.0, 1.0, 0.0], pose.yaw);
    let th = (sensor.hfov_deg.to_radians() / 2.0).tan();
    let tv = (sensor.vfov_deg.to_radians() / 2.0).tan();
    let dot = |x: &Vec3, y: &Vec3| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let near = 0.05;
    poly = clip(&poly, |q| dot(q, &fwd) - near);
    poly = clip(&poly, |q| th * dot(q, &fwd) - dot(q, &left));
    poly = clip(&poly, |q| th * dot(q, &fwd) + dot(q, &left));
    poly = clip(&poly, |q| tv * dot(q, &fwd) - q[2]);
    poly = clip(&poly, |q| tv * dot(q, &fwd) + q[2]);
    // Range disc approximated by its circumscribed octagon in the plane.
    let r = (sensor.max_range.powi(2) - d * d).sqrt();
    let r2 = r * std::f64::consts::SQRT_2;
    let (ui, vi) = (u.index(), v.index());
    poly = clip(&poly, |q| r - q[ui]);
    poly = clip(&poly, |q| r + q[ui]);
    poly = clip(&poly, |q| r - q[vi]);
    poly = clip(&poly, |q| r + q[vi]);
    poly = clip(&poly, |q| r2 - q[ui] - q[vi]);
    poly = clip(&poly, |q| r2 + q[ui] + q[vi]);
    poly = clip(&poly, |q| r2 - q[ui] + q[vi]);
    poly = clip(&poly, |q| r2 + q[ui] - q[vi]);
    if poly.len() < 3 {
        return None;
    }
    let extent = Rect::bounding(poly.iter().map(|q| in_plane_coords(plane.axis, q)))?;
    if extent.is_degenerate() {
        return None;
    }
    let intr = sensor.intrinsics();
    let image: Vec<[f64; 2]> = poly
        .iter()
        .map(|q| {
            let b = rotate_z(q, -pose.yaw);
            [-b[1] / b[0] * intr.fx, -b[2] / b[0] * intr.fy]
        })
        .collect();
    Some(VisiblePatch {
        d,
        extent,
        pixel_area: shoelace(&image),
    })
}

/// Direct signed range observations of every detectable plane at every pose.
///
/// A plane is detectable when it faces the sensor, its visible patch intersects the field of
/// view within range, covers at least `min_pixels` and spans at least `min_extent` m².
pub fn simulate_range_measurements(
    world: &ManhattanWorld,
    traj: &GroundTruthTrajectory,
    noise: &NoiseSpec,
    sensor: &SensorModel,
) -> Vec<SegmentObservation> {
    let mut rng = rng_for(noise.seed, streams::RANGE);
    let n = normal(noise.range_sigma);
    let mut out = Vec::new();
    for (frame, pose) in traj.poses.iter().enumerate() {
        for (pi, plane) in world.planes.iter().enumerate() {
            let Some(patch) = visible_patch(plane, pose, sensor) else {
                continue;
            };
            if patch.pixel_area < sensor.min_pixels as f64 || patch.extent.area() < sensor.min_extent {
                continue;
            }
            let d = patch.d + n.sample(&mut rng);
            out.push(SegmentObservation {
                segment_id: out.len(),
                frame_index: frame,
                axis: plane.axis,
                d,
                facing: Facing::toward_sensor(patch.d),
                extent: patch.extent,
                inlier_count: patch.pixel_area.round() as usize,
                source_plane: Some(pi),
            });
        }
    }
    out
}
