use std::io::{Read, Write};

use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{normal, rng_for, streams};
use super::{FramePose, ManhattanWorld, SimError};
use crate::geometry::{rotate_z, Vec3};

/// Pinhole intrinsics in pixels. Pixel `(col, row)` has its centre at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Intrinsics whose image edges span the given full fields of view.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64, vfov_deg: f64) -> Self {
        let fx = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        let fy = (height as f64 / 2.0) / (vfov_deg.to_radians() / 2.0).tan();
        Self {
            width,
            height,
            fx,
            fy,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(SimError::InvalidIntrinsics(format!(
                "fx, fy must be positive, got {}, {}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SimError::InvalidIntrinsics("image must be non-empty".into()));
        }
        Ok(())
    }

    /// Ray direction in the gravity-aligned body frame (x forward, y left, z up), with unit
    /// forward component so that the ray parameter equals z-depth.
    pub fn body_ray(&self, col: usize, row: usize) -> Vec3 {
        let xc = (col as f64 - self.cx) / self.fx;
        let yc = (row as f64 - self.cy) / self.fy;
        [1.0, -xc, -yc]
    }
}

/// Row-major z-depth image in meters; `NaN` marks pixels without a return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub intrinsics: Intrinsics,
    pub frame_index: usize,
}

const MAGIC: &[u8; 4] = b"MLDP";
const VERSION: u32 = 1;

impl DepthImage {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.depth[row * self.width + col]
    }

    /// Point of pixel `(col, row)` in the gravity-aligned body frame.
    pub fn back_project(&self, col: usize, row: usize) -> Option<Vec3> {
        back_project(&self.intrinsics, col, row, self.at(col, row))
    }

    /// Writes the portable binary form: a little-endian header (`MLDP`, version, width,
    /// height, frame index, fx, fy, cx, cy) followed by `width·height` f32 depths.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.frame_index as u64).to_le_bytes())?;
        for v in [
            self.intrinsics.fx,
            self.intrinsics.fy,
            self.intrinsics.cx,
            self.intrinsics.cy,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &d in &self.depth {
            w.write_all(&(d as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SimError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SimError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        let mut u32_le = |r: &mut R| -> Result<u32, SimError> {
            r.read_exact(&mut b4)?;
            Ok(u32::from_le_bytes(b4))
        };
        let version = u32_le(&mut r)?;
        if version != VERSION {
            return Err(SimError::Format(format!("unsupported version {version}")));
        }
        let width = u32_le(&mut r)? as usize;
        let height = u32_le(&mut r)? as usize;
        r.read_exact(&mut b8)?;
        let frame_index = u64::from_le_bytes(b8) as usize;
        let mut k = [0.0; 4];
        for v in &mut k {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        let mut depth = Vec::with_capacity(width * height);
        for _ in 0..width * height {
            r.read_exact(&mut b4)?;
            depth.push(f32::from_le_bytes(b4) as f64);
        }
        let intrinsics = Intrinsics {
            width,
            height,
            fx: k[0],
            fy: k[1],
            cx: k[2],
            cy: k[3],
        };
        intrinsics.validate()?;
        Ok(Self {
            width,
            height,
            depth,
            intrinsics,
            frame_index,
        })
    }

    /// 8-bit binary PGM for inspection: depth scaled over `[0, max_depth]`, no return as 0.
    pub fn write_pgm<W: Write>(&self, mut w: W, max_depth: f64) -> Result<(), SimError> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .depth
            .iter()
            .map(|&d| {
                if d.is_finite() {
                    (1.0 + 254.0 * (d / max_depth).clamp(0.0, 1.0)).round() as u8
                } else {
                    0
                }
            })
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Back-projects a z-depth into the gravity-aligned body frame.
pub fn back_project(intr: &Intrinsics, col: usize, row: usize, depth: f64) -> Option<Vec3> {
    if !(depth.is_finite() && depth > 0.0) {
        return None;
    }
    let r = intr.body_ray(col, row);
    Some([r[0] * depth, r[1] * depth, r[2] * depth])
}

fn default_max_range() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    #[serde(default = "default_max_range")]
    pub max_range: f64,
    /// Per-pixel gaussian depth noise as a fraction of depth.
    #[serde(default)]
    pub noise_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            max_range: default_max_range(),
            noise_ratio: 0.0,
            seed: 0,
        }
    }
}

/// A rendered frame with the index of the world plane hit by each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub image: DepthImage,
    pub plane_ids: Vec<Option<usize>>,
}

/// Noise-free ray cast with the default 6 m range cutoff.
pub fn render_depth_frame(
    world: &ManhattanWorld,
    pose: &FramePose,
    intr: &Intrinsics,
    frame_index: usize,
) -> DepthImage {
    render_depth_frame_with(world, pose, intr, &RenderOptions::default(), frame_index).image
}

/// Ray casts every pixel to the nearest plane that faces the sensor and contains the hit
/// point, honoring occlusion. Returns beyond `max_range` are dropped.
pub fn render_depth_frame_with(
    world: &ManhattanWorld,
    pose: &FramePose,
    intr: &Intrinsics,
    opts: &RenderOptions,
    frame_index: usize,
) -> RenderedFrame {
    let rows: Vec<Vec<(f64, Option<usize>)>> = (0..intr.height)
        .into_par_iter()
        .map(|row| {
            (0..intr.width)
                .map(|col| {
                    let body = intr.body_ray(col, row);
                    let dir = rotate_z(&body, pose.yaw);
                    let mut best: Option<(f64, usize)> = None;
                    for (pi, plane) in world.planes.iter().enumerate() {
                        let a = plane.axis.index();
                        if dir[a].abs() < 1e-12 || plane.facing.sign() * (pose.p[a] - plane.offset) <= 0.0 {
                            continue;
                        }
                        let t = (plane.offset - pose.p[a]) / dir[a];
                        if t <= 1e-9 || best.is_some_and(|(bt, _)| bt <= t) {
                            continue;
                        }
                        let (u, v) = plane.axis.in_plane();
                        let hu = pose.p[u.index()] + t * dir[u.index()];
                        let hv = pose.p[v.index()] + t * dir[v.index()];
                        if plane.extent.contains(hu, hv, 1e-9) {
                            best = Some((t, pi));
                        }
                    }
                    match best {
                        Some((t, pi)) if t * crate::geometry::norm(&dir) <= opts.max_range => (t, Some(pi)),
                        _ => (f64::NAN, None),
                    }
                })
                .collect()
        })
        .collect();
    let mut depth = Vec::with_capacity(intr.width * intr.height);
    let mut plane_ids = Vec::with_capacity(intr.width * intr.height);
    for row in rows {
        for (d, id) in row {
            depth.push(d);
            plane_ids.push(id);
        }
    }
    if opts.noise_ratio > 0.0 {
        let mut rng = rng_for(
            opts.seed
                .wrapping_add((frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            streams::DEPTH,
        );
        let n = normal(1.0);
        for d in depth.iter_mut().filter(|d| d.is_finite()) {
            *d += opts.noise_ratio * *d * n.sample(&mut rng);
        }
    }
    RenderedFrame {
        image: DepthImage {
            width: intr.width,
            height: intr.height,
            depth,
            intrinsics: *intr,
            frame_index,
        },
        plane_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Axis, Facing, Rect};
    use crate::sim::{generate_world, Primitive, WorldPlane, WorldSpec};

    fn wall_world() -> ManhattanWorld {
        generate_world(&WorldSpec {
            primitives: vec![Primitive::Plane {
                axis: Axis::X,
                offset: 2.0,
                facing: Facing::Negative,
                extent: Rect::new([-1.0, 0.0], [1.0, 2.5]),
            }],
        })
        .unwrap()
    }

    #[test]
    fn center_pixel_sees_wall_distance() {
        let intr = Intrinsics::from_fov(81, 61, 100.0, 85.0);
        let img = render_depth_frame(
            &wall_world(),
            &FramePose {
                p: [0.0, 0.0, 1.2],
                yaw: 0.0,
            },
            &intr,
            0,
        );
        assert!((img.at(40, 30) - 2.0).abs() < 1e-9);
        // The wall is only 2 m wide: the left image edge misses it.
        assert!(img.at(0, 30).is_nan());
    }

    #[test]
    fn binary_round_trip() {
        let intr = Intrinsics::from_fov(16, 12, 100.0, 85.0);
        let img = render_depth_frame(
            &wall_world(),
            &FramePose {
                p: [0.0, 0.0, 1.2],
                yaw: 0.0,
            },
            &intr,
            7,
        );
        let mut buf = Vec::new();
        img.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 * 3 + 8 + 32 + 16 * 12 * 4);
        let back = DepthImage::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.frame_index, 7);
        assert_eq!(back.intrinsics, img.intrinsics);
        for (a, b) in back.depth.iter().zip(&img.depth) {
            assert!((a.is_nan() && b.is_nan()) || (a - b).abs() < 1e-6);
        }
        let mut pgm = Vec::new();
        img.write_pgm(&mut pgm, 6.0).unwrap();
        assert!(pgm.starts_with(b"P5\n16 12\n255\n"));
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(matches!(
            DepthImage::read_binary(&b"XXXX0000"[..]),
            Err(SimError::Format(_))
        ));
    }

    #[test]
    fn occlusion_keeps_nearest_plane() {
        let mut world = wall_world();
        world.planes.push(WorldPlane {
            axis: Axis::X,
            offset: 1.0,
            facing: Facing::Negative,
            extent: Rect::new([-0.2, 0.0], [0.2, 2.5]),
        });
        let intr = Intrinsics::from_fov(81, 61, 100.0, 85.0);
        let f = render_depth_frame_with(
            &world,
            &FramePose {
                p: [0.0, 0.0, 1.2],
                yaw: 0.0,
            },
            &intr,
            &RenderOptions::default(),
            0,
        );
        assert_eq!(f.plane_ids[30 * 81 + 40], Some(1));
        assert!((f.image.at(40, 30) - 1.0).abs() < 1e-12);
    }
}
