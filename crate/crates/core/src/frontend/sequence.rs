use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    entropy_compass, extract_segments, fuse_orientation, label_axis_alignment, track_observations,
    CorrespondenceParams, FrontendError, LabelParams, SegmentParams,
};
use crate::geometry::{rotate_z, Vec3};
use crate::observation::{CorrespondenceEdge, SegmentObservation};
use crate::sim::{DepthImage, VioOdometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompassParams {
    pub bin_width: f64,
    /// Search window around the odometry heading for the first frame.
    pub initial_radius_deg: f64,
    pub initial_step_deg: f64,
    /// Constrained window around the predicted heading for every later frame (and for
    /// refining the first).
    pub radius_deg: f64,
    pub step_deg: f64,
    /// Use every n-th pixel in both directions.
    pub pixel_stride: usize,
}

impl Default for CompassParams {
    fn default() -> Self {
        Self {
            bin_width: super::DEFAULT_BIN_WIDTH,
            initial_radius_deg: 45.0,
            initial_step_deg: 1.0,
            radius_deg: 0.3,
            step_deg: 0.05,
            pixel_stride: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendParams {
    pub compass: CompassParams,
    pub labels: LabelParams,
    pub segments: SegmentParams,
    pub correspondence: CorrespondenceParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendOutput {
    pub compass_yaws: Vec<Option<f64>>,
    pub yaws: Vec<f64>,
    /// Aligned-frame translation between consecutive frames.
    pub motions: Vec<Vec3>,
    pub segments: Vec<SegmentObservation>,
    pub edges: Vec<CorrespondenceEdge>,
}

fn horizontal_points(img: &DepthImage, stride: usize) -> Vec<[f64; 2]> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for row in (0..img.height).step_by(stride) {
        for col in (0..img.width).step_by(stride) {
            if let Some(p) = img.back_project(col, row) {
                out.push([p[0], p[1]]);
            }
        }
    }
    out
}

/// Runs the whole front-end over a depth sequence with visual-inertial odometry.
///
/// The first frame's heading is searched widely around the odometry heading and refined;
/// later frames search a narrow window around the dead-reckoned prediction. Labels and
/// segments are then computed per frame in parallel and linked by temporal correspondences.
pub fn process_sequence(
    frames: &[DepthImage],
    vio: &VioOdometry,
    params: &FrontendParams,
    seed: u64,
) -> Result<FrontendOutput, FrontendError> {
    let n = frames.len();
    if n == 0 {
        return Err(FrontendError::InvalidParams("no frames".into()));
    }
    if vio.yaw_deltas.len() + 1 != n || vio.body_translations.len() + 1 != n {
        return Err(FrontendError::DimensionMismatch(format!(
            "{n} frames but {} yaw deltas and {} translations",
            vio.yaw_deltas.len(),
            vio.body_translations.len()
        )));
    }
    params.labels.validate()?;
    params.segments.validate()?;
    let c = &params.compass;
    let mut compass_yaws = Vec::with_capacity(n);
    let mut predicted = vio.initial_yaw;
    for (i, img) in frames.iter().enumerate() {
        let pts = horizontal_points(img, c.pixel_stride);
        let estimate = if i == 0 {
            entropy_compass(
                &pts,
                predicted,
                c.initial_radius_deg.to_radians(),
                c.initial_step_deg.to_radians(),
                c.bin_width,
            )
            .and_then(|coarse| {
                let r = c.initial_step_deg.max(c.radius_deg).to_radians();
                entropy_compass(&pts, coarse, r, c.step_deg.to_radians(), c.bin_width)
            })
        } else {
            entropy_compass(
                &pts,
                predicted,
                c.radius_deg.to_radians(),
                c.step_deg.to_radians(),
                c.bin_width,
            )
        };
        compass_yaws.push(estimate);
        let current = estimate.unwrap_or(predicted);
        if i + 1 < n {
            predicted = current + vio.yaw_deltas[i];
        }
    }
    let mut yaws = fuse_orientation(&vio.yaw_deltas, &compass_yaws)?;
    if compass_yaws.iter().all(Option::is_none) {
        yaws.iter_mut().for_each(|y| *y += vio.initial_yaw);
    }
    let motions: Vec<Vec3> = vio
        .body_translations
        .iter()
        .zip(&yaws)
        .map(|(t, &yaw)| rotate_z(t, yaw))
        .collect();

    let per_frame: Vec<Vec<SegmentObservation>> = frames
        .par_iter()
        .zip(yaws.par_iter())
        .map(|(img, &yaw)| {
            let labels = label_axis_alignment(img, yaw, &params.labels)?;
            extract_segments(&labels, img, yaw, &params.segments, seed, 0)
        })
        .collect::<Result<_, _>>()?;
    let mut segments = Vec::new();
    for mut s in per_frame.into_iter().flatten() {
        s.segment_id = segments.len();
        segments.push(s);
    }
    let edges = track_observations(&segments, &motions, &params.correspondence);
    Ok(FrontendOutput {
        compass_yaws,
        yaws,
        motions,
        segments,
        edges,
    })
}
