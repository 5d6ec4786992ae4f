use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{Axis, Facing, Rect, Vec3};

/// A finite axis-aligned planar surface of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldPlane {
    pub axis: Axis,
    pub offset: f64,
    pub facing: Facing,
    /// Rectangle in the plane's `(u, v)` coordinates (see [`Axis::in_plane`]).
    pub extent: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn contains(&self, p: &Vec3, eps: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - eps && p[i] <= self.max[i] + eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManhattanWorld {
    pub planes: Vec<WorldPlane>,
    pub bounds: Aabb,
}

/// All pieces of the world lying on one infinite layout plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutPlaneGroup {
    pub axis: Axis,
    pub facing: Facing,
    pub offset: f64,
    pub members: Vec<usize>,
    pub extent: Rect,
}

impl ManhattanWorld {
    /// Groups coplanar, same-facing pieces; sorted by axis, facing and offset.
    pub fn layout_planes(&self) -> Vec<LayoutPlaneGroup> {
        let mut groups: Vec<LayoutPlaneGroup> = Vec::new();
        for (i, p) in self.planes.iter().enumerate() {
            match groups
                .iter_mut()
                .find(|g| g.axis == p.axis && g.facing == p.facing && (g.offset - p.offset).abs() < 1e-9)
            {
                Some(g) => {
                    g.members.push(i);
                    g.extent = g.extent.union(&p.extent);
                }
                None => groups.push(LayoutPlaneGroup {
                    axis: p.axis,
                    facing: p.facing,
                    offset: p.offset,
                    members: vec![i],
                    extent: p.extent,
                }),
            }
        }
        groups.sort_by(|a, b| {
            (a.axis, a.facing)
                .cmp(&(b.axis, b.facing))
                .then(a.offset.total_cmp(&b.offset))
        });
        groups
    }

    /// Index into [`Self::layout_planes`] of the group containing plane `plane`.
    pub fn layout_plane_of(&self, plane: usize) -> Option<usize> {
        self.layout_planes().iter().position(|g| g.members.contains(&plane))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallSide {
    XMin,
    XMax,
    YMin,
    YMax,
}

/// Full-height opening in a room wall, centred at `center` along the wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Door {
    pub wall: WallSide,
    pub center: f64,
    pub width: f64,
}

fn default_door_width() -> f64 {
    0.9
}

/// Building blocks of a scenario world. Rooms and corridors face inward; blocks face outward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Room {
        min: [f64; 2],
        max: [f64; 2],
        height: f64,
        #[serde(default)]
        doors: Vec<Door>,
    },
    /// A room of `width × length` starting at `origin`, running along `along`.
    Corridor {
        origin: [f64; 2],
        width: f64,
        length: f64,
        height: f64,
        along: Axis,
        #[serde(default)]
        doors: Vec<Door>,
    },
    /// Rectangular loop corridor of the given `width` inside the outer rectangle `min..max`.
    Loop {
        min: [f64; 2],
        max: [f64; 2],
        width: f64,
        height: f64,
        #[serde(default)]
        door_spacing: Option<f64>,
        #[serde(default = "default_door_width")]
        door_width: f64,
    },
    /// Solid obstacle (pillar, partition) with outward-facing walls.
    Block { min: [f64; 2], max: [f64; 2], height: f64 },
    Plane {
        axis: Axis,
        offset: f64,
        facing: Facing,
        extent: Rect,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub primitives: Vec<Primitive>,
}

fn invalid(index: usize, reason: impl Into<String>) -> SimError {
    SimError::InvalidPrimitive {
        index,
        reason: reason.into(),
    }
}

fn check_rect(index: usize, min: [f64; 2], max: [f64; 2], height: f64) -> Result<(), SimError> {
    if !(max[0] > min[0] && max[1] > min[1]) {
        return Err(invalid(index, "max must exceed min on both axes"));
    }
    if !(height > 0.0) {
        return Err(invalid(index, "height must be positive"));
    }
    Ok(())
}

/// Splits the interval `[lo, hi]` by the given `(center, width)` openings.
fn split_interval(lo: f64, hi: f64, openings: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<(f64, f64)> = openings
        .iter()
        .map(|&(c, w)| ((c - w / 2.0).max(lo), (c + w / 2.0).min(hi)))
        .filter(|(a, b)| b > a)
        .collect();
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut start = lo;
    for (a, b) in cuts {
        if a - start > 1e-6 {
            out.push((start, a));
        }
        start = start.max(b);
    }
    if hi - start > 1e-6 {
        out.push((start, hi));
    }
    out
}

/// Vertical wall pieces of side `side` of the rectangle `min..max`.
fn wall_pieces(
    min: [f64; 2],
    max: [f64; 2],
    height: f64,
    side: WallSide,
    inward: bool,
    openings: &[(f64, f64)],
    out: &mut Vec<WorldPlane>,
) {
    let (axis, offset, lo, hi, normal_positive) = match side {
        WallSide::XMin => (Axis::X, min[0], min[1], max[1], true),
        WallSide::XMax => (Axis::X, max[0], min[1], max[1], false),
        WallSide::YMin => (Axis::Y, min[1], min[0], max[0], true),
        WallSide::YMax => (Axis::Y, max[1], min[0], max[0], false),
    };
    let facing = if normal_positive == inward {
        Facing::Positive
    } else {
        Facing::Negative
    };
    for (a, b) in split_interval(lo, hi, openings) {
        out.push(WorldPlane {
            axis,
            offset,
            facing,
            extent: Rect::new([a, 0.0], [b, height]),
        });
    }
}

const SIDES: [WallSide; 4] = [WallSide::XMin, WallSide::XMax, WallSide::YMin, WallSide::YMax];

fn room(min: [f64; 2], max: [f64; 2], height: f64, doors: &[Door], out: &mut Vec<WorldPlane>) {
    for side in SIDES {
        let openings: Vec<(f64, f64)> = doors
            .iter()
            .filter(|d| d.wall == side)
            .map(|d| (d.center, d.width))
            .collect();
        wall_pieces(min, max, height, side, true, &openings, out);
    }
    floor_and_ceiling(min, max, height, out);
}

fn floor_and_ceiling(min: [f64; 2], max: [f64; 2], height: f64, out: &mut Vec<WorldPlane>) {
    let extent = Rect::new(min, max);
    out.push(WorldPlane {
        axis: Axis::Z,
        offset: 0.0,
        facing: Facing::Positive,
        extent,
    });
    out.push(WorldPlane {
        axis: Axis::Z,
        offset: height,
        facing: Facing::Negative,
        extent,
    });
}

fn expand(index: usize, prim: &Primitive, out: &mut Vec<WorldPlane>) -> Result<(), SimError> {
    match prim {
        Primitive::Room {
            min,
            max,
            height,
            doors,
        } => {
            check_rect(index, *min, *max, *height)?;
            room(*min, *max, *height, doors, out);
        }
        Primitive::Corridor {
            origin,
            width,
            length,
            height,
            along,
            doors,
        } => {
            let size = match along {
                Axis::X => [*length, *width],
                Axis::Y => [*width, *length],
                Axis::Z => return Err(invalid(index, "corridor must run along x or y")),
            };
            let max = [origin[0] + size[0], origin[1] + size[1]];
            check_rect(index, *origin, max, *height)?;
            room(*origin, max, *height, doors, out);
        }
        Primitive::Loop {
            min,
            max,
            width,
            height,
            door_spacing,
            door_width,
        } => {
            check_rect(index, *min, *max, *height)?;
            let (w, h) = (max[0] - min[0], max[1] - min[1]);
            if !(*width > 0.0 && 2.0 * width < w && 2.0 * width < h) {
                return Err(invalid(index, "loop width must be positive and leave an inner block"));
            }
            for side in SIDES {
                let (lo, hi) = match side {
                    WallSide::XMin | WallSide::XMax => (min[1], max[1]),
                    WallSide::YMin | WallSide::YMax => (min[0], max[0]),
                };
                let mut openings = Vec::new();
                if let Some(spacing) = door_spacing {
                    if !(*spacing > *door_width) {
                        return Err(invalid(index, "door_spacing must exceed door_width"));
                    }
                    let mut c = lo + width + spacing;
                    while c + door_width / 2.0 < hi - width {
                        openings.push((c, *door_width));
                        c += spacing;
                    }
                }
                wall_pieces(*min, *max, *height, side, true, &openings, out);
            }
            let imin = [min[0] + width, min[1] + width];
            let imax = [max[0] - width, max[1] - width];
            for side in SIDES {
                wall_pieces(imin, imax, *height, side, false, &[], out);
            }
            floor_and_ceiling(*min, *max, *height, out);
        }
        Primitive::Block { min, max, height } => {
            check_rect(index, *min, *max, *height)?;
            for side in SIDES {
                wall_pieces(*min, *max, *height, side, false, &[], out);
            }
        }
        Primitive::Plane {
            axis,
            offset,
            facing,
            extent,
        } => {
            if extent.is_degenerate() {
                return Err(invalid(index, "plane extent must have positive area"));
            }
            out.push(WorldPlane {
                axis: *axis,
                offset: *offset,
                facing: *facing,
                extent: *extent,
            });
        }
    }
    Ok(())
}

/// Expands a world spec into its planes. Deterministic in the spec.
pub fn generate_world(spec: &WorldSpec) -> Result<ManhattanWorld, SimError> {
    let mut planes = Vec::new();
    for (i, prim) in spec.primitives.iter().enumerate() {
        expand(i, prim, &mut planes)?;
    }
    if planes.is_empty() {
        return Err(SimError::NoPlanes);
    }
    for a in 0..planes.len() {
        for b in a + 1..planes.len() {
            let (p, q) = (&planes[a], &planes[b]);
            if p.axis == q.axis
                && (p.offset - q.offset).abs() < 1e-9
                && p.facing != q.facing
                && p.extent.intersection(&q.extent).is_some()
            {
                return Err(SimError::ContradictoryPlanes { a, b });
            }
        }
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in &planes {
        let a = p.axis.index();
        let (u, v) = p.axis.in_plane();
        min[a] = min[a].min(p.offset);
        max[a] = max[a].max(p.offset);
        for (k, ax) in [(0, u), (1, v)] {
            min[ax.index()] = min[ax.index()].min(p.extent.min[k]);
            max[ax.index()] = max[ax.index()].max(p.extent.max[k]);
        }
    }
    Ok(ManhattanWorld {
        planes,
        bounds: Aabb { min, max },
    })
}
