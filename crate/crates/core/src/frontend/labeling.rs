use serde::{Deserialize, Serialize};

use super::FrontendError;
use crate::geometry::{rotate_z, Axis, Vec3};
use crate::sim::DepthImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisLabel {
    X,
    Y,
    Z,
    Unknown,
    NoData,
}

impl AxisLabel {
    pub fn axis(self) -> Option<Axis> {
        match self {
            AxisLabel::X => Some(Axis::X),
            AxisLabel::Y => Some(Axis::Y),
            AxisLabel::Z => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn from_axis(axis: Axis) -> Self {
        match axis {
            Axis::X => AxisLabel::X,
            Axis::Y => AxisLabel::Y,
            Axis::Z => AxisLabel::Z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisLabelImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<AxisLabel>,
}

impl AxisLabelImage {
    pub fn at(&self, col: usize, row: usize) -> AxisLabel {
        self.labels[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelParams {
    /// Side of the square neighborhood; odd, at least 3.
    pub k: usize,
    /// Fraction of valid neighbors the winning axis must explain.
    pub min_fraction: f64,
    /// Distance (m) within which a neighbor counts as lying on the candidate plane.
    pub plane_tol: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self {
            k: 5,
            min_fraction: 0.6,
            plane_tol: 0.03,
        }
    }
}

impl LabelParams {
    pub fn validate(&self) -> Result<(), FrontendError> {
        if self.k < 3 || self.k.is_multiple_of(2) {
            return Err(FrontendError::InvalidParams(format!(
                "k must be odd and at least 3, got {}",
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err(FrontendError::InvalidParams(format!(
                "min_fraction {} outside [0, 1]",
                self.min_fraction
            )));
        }
        if !(self.plane_tol > 0.0) {
            return Err(FrontendError::InvalidParams(format!(
                "plane_tol must be positive, got {}",
                self.plane_tol
            )));
        }
        Ok(())
    }
}

/// Back-projected points of every pixel in the Manhattan-aligned frame centred on the sensor.
pub fn aligned_points(depth: &DepthImage, yaw: f64) -> Vec<Option<Vec3>> {
    let mut out = Vec::with_capacity(depth.width * depth.height);
    for row in 0..depth.height {
        for col in 0..depth.width {
            out.push(depth.back_project(col, row).map(|p| rotate_z(&p, yaw)));
        }
    }
    out
}

/// Labels each pixel with the major axis whose perpendicular plane through the pixel's point
/// contains the largest share of its valid `k×k` neighbors.
///
/// Ties between axes and shares below `min_fraction` give [`AxisLabel::Unknown`].
pub fn label_axis_alignment(
    depth: &DepthImage,
    yaw: f64,
    params: &LabelParams,
) -> Result<AxisLabelImage, FrontendError> {
    params.validate()?;
    let points = aligned_points(depth, yaw);
    Ok(label_points(depth.width, depth.height, &points, params))
}

pub(crate) fn label_points(
    width: usize,
    height: usize,
    points: &[Option<Vec3>],
    params: &LabelParams,
) -> AxisLabelImage {
    let r = (params.k / 2) as isize;
    let mut labels = Vec::with_capacity(width * height);
    for row in 0..height as isize {
        for col in 0..width as isize {
            let Some(p) = points[(row * width as isize + col) as usize] else {
                labels.push(AxisLabel::NoData);
                continue;
            };
            let mut counts = [0usize; 3];
            let mut valid = 0usize;
            for dr in -r..=r {
                for dc in -r..=r {
                    let (rr, cc) = (row + dr, col + dc);
                    if (dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= height as isize || cc >= width as isize {
                        continue;
                    }
                    let Some(q) = points[(rr * width as isize + cc) as usize] else {
                        continue;
                    };
                    valid += 1;
                    for (a, count) in counts.iter_mut().enumerate() {
                        if (q[a] - p[a]).abs() <= params.plane_tol {
                            *count += 1;
                        }
                    }
                }
            }
            let best = *counts.iter().max().unwrap();
            let winners: Vec<usize> = (0..3).filter(|&a| counts[a] == best).collect();
            let label = if valid == 0 || winners.len() > 1 || (best as f64) < params.min_fraction * valid as f64 {
                AxisLabel::Unknown
            } else {
                AxisLabel::from_axis(Axis::ALL[winners[0]])
            };
            labels.push(label);
        }
    }
    AxisLabelImage { width, height, labels }
}
