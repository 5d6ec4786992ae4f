use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GroundTruthTrajectory, SimError};
use crate::geometry::{rotate_z, sub, wrap_pi, Vec3};

/// Independent ChaCha8 streams, one per noise source, so that changing one source never
/// perturbs another's draws.
pub mod streams {
    pub const ODOMETRY: u64 = 1;
    pub const YAW: u64 = 2;
    pub const RANGE: u64 = 3;
    pub const DEPTH: u64 = 4;
    pub const RANSAC: u64 = 5;
    pub const SCENARIO: u64 = 6;
}

/// Deterministic generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn default_depth_ratio() -> f64 {
    0.005
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-step, per-axis odometry standard deviation (m).
    pub odom_sigma: f64,
    /// Constant per-step odometry bias in the axis-aligned frame (m).
    pub odom_bias: Vec3,
    /// Direct range measurement standard deviation (m).
    pub range_sigma: f64,
    /// Per-step odometry yaw standard deviation (rad).
    pub yaw_sigma: f64,
    /// Rendered depth noise as a fraction of depth.
    #[serde(default = "default_depth_ratio")]
    pub depth_sigma_ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            odom_sigma: 0.0,
            odom_bias: [0.0; 3],
            range_sigma: 0.0,
            yaw_sigma: 0.0,
            depth_sigma_ratio: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("odom_sigma", self.odom_sigma),
            ("range_sigma", self.range_sigma),
            ("yaw_sigma", self.yaw_sigma),
            ("depth_sigma_ratio", self.depth_sigma_ratio),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidNoise(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.odom_bias.iter().any(|b| !b.is_finite()) {
            return Err(SimError::InvalidNoise("odom_bias must be finite".into()));
        }
        Ok(())
    }
}

pub(crate) fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.max(0.0)).expect("finite non-negative sigma")
}

/// Noisy inter-frame translations `t_i ≈ p_{i+1} − p_i` in the axis-aligned frame.
pub fn simulate_odometry(traj: &GroundTruthTrajectory, noise: &NoiseSpec) -> Vec<Vec3> {
    let mut rng = rng_for(noise.seed, streams::ODOMETRY);
    let n = normal(noise.odom_sigma);
    traj.poses
        .windows(2)
        .map(|w| {
            let step = sub(&w[1].p, &w[0].p);
            let mut t = [0.0; 3];
            for k in 0..3 {
                t[k] = step[k] + noise.odom_bias[k] + n.sample(&mut rng);
            }
            t
        })
        .collect()
}

/// Odometry as a visual-inertial system reports it: translations in the previous body frame
/// and noisy relative yaw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VioOdometry {
    pub initial_yaw: f64,
    pub body_translations: Vec<Vec3>,
    pub yaw_deltas: Vec<f64>,
}

/// Uses the same translation draws as [`simulate_odometry`], so rotating `body_translations`
/// back by the true yaw reproduces its output.
pub fn simulate_vio(traj: &GroundTruthTrajectory, noise: &NoiseSpec) -> VioOdometry {
    let aligned = simulate_odometry(traj, noise);
    let mut rng = rng_for(noise.seed, streams::YAW);
    let n = normal(noise.yaw_sigma);
    let body_translations = aligned
        .iter()
        .zip(&traj.poses)
        .map(|(t, pose)| rotate_z(t, -pose.yaw))
        .collect();
    let yaw_deltas = traj
        .poses
        .windows(2)
        .map(|w| wrap_pi(w[1].yaw - w[0].yaw) + n.sample(&mut rng))
        .collect();
    VioOdometry {
        initial_yaw: traj.poses.first().map_or(0.0, |p| p.yaw),
        body_translations,
        yaw_deltas,
    }
}
