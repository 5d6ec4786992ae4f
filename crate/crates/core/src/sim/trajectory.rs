use serde::{Deserialize, Serialize};

use super::{ManhattanWorld, SimError};
use crate::geometry::{wrap_pi, wrap_two_pi, Vec3};

fn default_turn_step() -> f64 {
    15.0
}

/// Piecewise-linear walk through planar waypoints at constant height.
///
/// The sensor faces its direction of travel and turns in place at waypoints in increments of
/// at most `turn_step_deg`. A closed trajectory returns exactly to the first waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub waypoints: Vec<[f64; 2]>,
    pub height: f64,
    pub step: f64,
    #[serde(default = "default_turn_step")]
    pub turn_step_deg: f64,
    #[serde(default)]
    pub closed: bool,
}

/// Axis-aligned sensor position and heading (gravity is known, so only yaw varies).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub p: Vec3,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrajectory {
    pub poses: Vec<FramePose>,
    pub closed: bool,
}

impl GroundTruthTrajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| crate::geometry::norm(&crate::geometry::sub(&w[1].p, &w[0].p)))
            .sum()
    }
}

pub fn generate_trajectory(spec: &TrajectorySpec, world: &ManhattanWorld) -> Result<GroundTruthTrajectory, SimError> {
    if spec.waypoints.len() < 2 {
        return Err(SimError::InvalidTrajectory("need at least two waypoints".into()));
    }
    if !(spec.step > 0.0) {
        return Err(SimError::InvalidTrajectory("step must be positive".into()));
    }
    if !(spec.turn_step_deg > 0.0) {
        return Err(SimError::InvalidTrajectory("turn_step_deg must be positive".into()));
    }
    let mut path = spec.waypoints.clone();
    if spec.closed {
        path.push(spec.waypoints[0]);
    }
    let turn_step = spec.turn_step_deg.to_radians();
    let h = spec.height;
    let heading = |a: [f64; 2], b: [f64; 2]| (b[1] - a[1]).atan2(b[0] - a[0]);

    let mut yaw = heading(path[0], path[1]);
    let mut poses = vec![FramePose {
        p: [path[0][0], path[0][1], h],
        yaw: wrap_two_pi(yaw),
    }];
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if len < 1e-9 {
            continue;
        }
        let target = heading(a, b);
        let mut delta = wrap_pi(target - yaw);
        while delta.abs() > 1e-12 {
            let s = delta.clamp(-turn_step, turn_step);
            yaw += s;
            delta -= s;
            poses.push(FramePose {
                p: [a[0], a[1], h],
                yaw: wrap_two_pi(yaw),
            });
        }
        yaw = target;
        let n = (len / spec.step).ceil().max(1.0) as usize;
        for j in 1..=n {
            let p = if j == n {
                b
            } else {
                let f = j as f64 / n as f64;
                [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
            };
            poses.push(FramePose {
                p: [p[0], p[1], h],
                yaw: wrap_two_pi(yaw),
            });
        }
    }
    for (i, pose) in poses.iter().enumerate() {
        if !world.bounds.contains(&pose.p, 1e-9) {
            return Err(SimError::InvalidTrajectory(format!(
                "pose {i} at {:?} leaves the world bounds",
                pose.p
            )));
        }
    }
    Ok(GroundTruthTrajectory {
        poses,
        closed: spec.closed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Axis;
    use crate::sim::{generate_world, Primitive, WorldSpec};

    fn room() -> ManhattanWorld {
        generate_world(&WorldSpec {
            primitives: vec![Primitive::Corridor {
                origin: [0.0, 0.0],
                width: 10.0,
                length: 10.0,
                height: 2.5,
                along: Axis::X,
                doors: vec![],
            }],
        })
        .unwrap()
    }

    #[test]
    fn closed_square_returns_to_start() {
        let spec = TrajectorySpec {
            waypoints: vec![[2.0, 2.0], [8.0, 2.0], [8.0, 8.0], [2.0, 8.0]],
            height: 1.2,
            step: 0.25,
            turn_step_deg: 15.0,
            closed: true,
        };
        let t = generate_trajectory(&spec, &room()).unwrap();
        assert_eq!(t.poses.first().unwrap().p, t.poses.last().unwrap().p);
        assert!((t.path_length() - 24.0).abs() < 1e-9);
        for p in &t.poses {
            assert!(p.yaw >= 0.0 && p.yaw < std::f64::consts::TAU);
        }
        // Three 90° corners at 15° per frame → 6 in-place rotation frames each.
        let turning = t.poses.windows(2).filter(|w| w[0].p == w[1].p).count();
        assert_eq!(turning, 6 * 3);
    }

    #[test]
    fn leaving_the_world_is_rejected() {
        let spec = TrajectorySpec {
            waypoints: vec![[2.0, 2.0], [12.0, 2.0]],
            height: 1.2,
            step: 0.5,
            turn_step_deg: 15.0,
            closed: false,
        };
        assert!(matches!(
            generate_trajectory(&spec, &room()),
            Err(SimError::InvalidTrajectory(_))
        ));
    }
}
