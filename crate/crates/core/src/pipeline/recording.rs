//! On-disk recordings: one depth binary per frame plus an odometry CSV.
//!
//! Layout of a recording directory:
//! - `frames/000000.depth`, `frames/000001.depth`, … in the portable depth binary format;
//! - `odometry.csv` with header `frame,yaw,dyaw,dx,dy,dz`: the odometry yaw at each frame
//!   (rad), then the relative yaw (rad) and body-frame translation (m) from that frame to the
//!   next, zero on the last row. Replays read the relative columns, so they match exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Simulation};
use crate::sim::{DepthImage, VioOdometry};

pub const ODOMETRY_FILE: &str = "odometry.csv";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OdometryRow {
    frame: usize,
    yaw: f64,
    dyaw: f64,
    dx: f64,
    dy: f64,
    dz: f64,
}

/// Depth frames and odometry of one traversal.
#[derive(Debug, Clone)]
pub struct Recording {
    pub frames: Vec<DepthImage>,
    pub vio: VioOdometry,
}

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    PipelineError::Export(format!("{}: {e}", path.display()))
}

impl Recording {
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let frames_dir = dir.join(FRAMES_DIR);
        std::fs::create_dir_all(&frames_dir).map_err(|e| PipelineError::io(&frames_dir, e))?;
        for (i, img) in self.frames.iter().enumerate() {
            let path = frames_dir.join(format!("{i:06}.depth"));
            let file = File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
            let mut w = BufWriter::new(file);
            img.write_binary(&mut w)?;
            std::io::Write::flush(&mut w).map_err(|e| PipelineError::io(&path, e))?;
        }
        let path = dir.join(ODOMETRY_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let mut yaw = self.vio.initial_yaw;
        for i in 0..self.frames.len() {
            let t = self.vio.body_translations.get(i).copied().unwrap_or([0.0; 3]);
            let dyaw = self.vio.yaw_deltas.get(i).copied().unwrap_or(0.0);
            w.serialize(OdometryRow {
                frame: i,
                yaw,
                dyaw,
                dx: t[0],
                dy: t[1],
                dz: t[2],
            })
            .map_err(|e| csv_error(&path, e))?;
            yaw += dyaw;
        }
        w.flush().map_err(|e| PipelineError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(ODOMETRY_FILE);
        let mut rows = Vec::new();
        for row in csv::Reader::from_path(&path)
            .map_err(|e| csv_error(&path, e))?
            .deserialize()
        {
            let row: OdometryRow = row.map_err(|e| csv_error(&path, e))?;
            if row.frame != rows.len() {
                return Err(PipelineError::Export(format!(
                    "{}: expected frame {} but found {}",
                    path.display(),
                    rows.len(),
                    row.frame
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(PipelineError::Export(format!("{}: no rows", path.display())));
        }
        let frames_dir = dir.join(FRAMES_DIR);
        let frames = (0..rows.len())
            .map(|i| {
                let p = frames_dir.join(format!("{i:06}.depth"));
                let file = File::open(&p).map_err(|e| PipelineError::io(&p, e))?;
                Ok(DepthImage::read_binary(BufReader::new(file))?)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let vio = VioOdometry {
            initial_yaw: rows[0].yaw,
            body_translations: rows[..rows.len() - 1].iter().map(|r| [r.dx, r.dy, r.dz]).collect(),
            yaw_deltas: rows[..rows.len() - 1].iter().map(|r| r.dyaw).collect(),
        };
        Ok(Recording { frames, vio })
    }
}

impl Simulation {
    /// Replaces the simulated depth frames and odometry with a recording, keeping the world
    /// and trajectory as evaluation ground truth.
    pub fn with_recording(mut self, rec: Recording) -> Self {
        self.frames = rec.frames;
        self.vio = rec.vio;
        self.observations.clear();
        self
    }

    pub fn recording(&self) -> Recording {
        Recording {
            frames: self.frames.clone(),
            vio: self.vio.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Intrinsics;

    #[test]
    fn recording_survives_disk() {
        let intrinsics = Intrinsics::from_fov(4, 3, 100.0, 85.0);
        let frames: Vec<DepthImage> = (0..3)
            .map(|i| DepthImage {
                width: 4,
                height: 3,
                depth: (0..12)
                    .map(|k| if k == 5 { f64::NAN } else { 0.5 + k as f64 * 0.25 })
                    .collect(),
                intrinsics,
                frame_index: i,
            })
            .collect();
        let rec = Recording {
            frames,
            vio: VioOdometry {
                initial_yaw: 0.25,
                body_translations: vec![[0.2, 0.0, 0.0], [0.1, -0.05, 0.0]],
                yaw_deltas: vec![0.1, -0.7],
            },
        };
        let dir = tempfile::tempdir().unwrap();
        rec.write(dir.path()).unwrap();
        let back = Recording::read(dir.path()).unwrap();
        assert_eq!(back.vio, rec.vio);
        assert_eq!(back.frames.len(), 3);
        assert!(back.frames[1].depth[5].is_nan());
        assert_eq!(back.frames[2].depth[11], 3.25);
    }
}
