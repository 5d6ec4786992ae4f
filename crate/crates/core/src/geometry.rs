//! Axis-aligned geometry shared by the simulator, front-end and model export.

use std::fmt;

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

/// One of the three Manhattan axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }

    /// The two in-plane axes `(u, v)` of a plane perpendicular to `self`, in increasing order.
    pub fn in_plane(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sign of a plane's surface normal along its axis. Serialized as `1` / `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Facing {
    Negative,
    Positive,
}

impl Facing {
    pub fn sign(self) -> f64 {
        match self {
            Facing::Positive => 1.0,
            Facing::Negative => -1.0,
        }
    }

    /// Facing of a surface seen at signed offset `d` from the sensor: the normal points back at it.
    pub fn toward_sensor(d: f64) -> Facing {
        if d > 0.0 {
            Facing::Negative
        } else {
            Facing::Positive
        }
    }

    pub fn flipped(self) -> Facing {
        match self {
            Facing::Positive => Facing::Negative,
            Facing::Negative => Facing::Positive,
        }
    }
}

impl From<Facing> for i8 {
    fn from(f: Facing) -> i8 {
        match f {
            Facing::Positive => 1,
            Facing::Negative => -1,
        }
    }
}

impl TryFrom<i8> for Facing {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Facing::Positive),
            -1 => Ok(Facing::Negative),
            other => Err(format!("facing must be 1 or -1, got {other}")),
        }
    }
}

/// Axis-aligned rectangle in a plane's `(u, v)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            min: [self.min[0].max(other.min[0]), self.min[1].max(other.min[1])],
            max: [self.max[0].min(other.max[0]), self.max[1].min(other.max[1])],
        };
        (!r.is_degenerate()).then_some(r)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    pub fn translated(&self, du: f64, dv: f64) -> Rect {
        Rect {
            min: [self.min[0] + du, self.min[1] + dv],
            max: [self.max[0] + du, self.max[1] + dv],
        }
    }

    pub fn contains(&self, u: f64, v: f64, eps: f64) -> bool {
        u >= self.min[0] - eps && u <= self.max[0] + eps && v >= self.min[1] - eps && v <= self.max[1] + eps
    }

    /// Bounding rectangle of a point set; `None` when empty.
    pub fn bounding(points: impl IntoIterator<Item = [f64; 2]>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect::new(first, first);
        for p in it {
            r.min[0] = r.min[0].min(p[0]);
            r.min[1] = r.min[1].min(p[1]);
            r.max[0] = r.max[0].max(p[0]);
            r.max[1] = r.max[1].max(p[1]);
        }
        Some(r)
    }
}

/// Projects a 3-vector onto the in-plane coordinates of a plane perpendicular to `axis`.
pub fn in_plane_coords(axis: Axis, p: &Vec3) -> [f64; 2] {
    let (u, v) = axis.in_plane();
    [p[u.index()], p[v.index()]]
}

pub fn rotate_z(p: &Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn norm(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w >= std::f64::consts::TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = wrap_two_pi(a);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}
