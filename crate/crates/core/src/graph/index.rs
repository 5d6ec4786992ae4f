use serde::{Deserialize, Serialize};

use crate::geometry::Axis;

/// What a column of ξ parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entity {
    Position { frame: usize, axis: Axis },
    Plane { slot: usize, axis: Axis },
}

/// Column layout of ξ: `[p_0 … p_{n−1}]` with three components each, then plane offsets
/// ordered x slots, y slots, z slots (slot `s` is global and already sorted by axis).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterIndex {
    pub n_frames: usize,
    /// Axis of each plane slot, in slot order.
    pub slot_axes: Vec<Axis>,
}

impl ParameterIndex {
    pub fn dim(&self) -> usize {
        3 * self.n_frames + self.slot_axes.len()
    }

    pub fn n_slots(&self) -> usize {
        self.slot_axes.len()
    }

    pub fn position(&self, frame: usize, axis: Axis) -> usize {
        debug_assert!(frame < self.n_frames);
        3 * frame + axis.index()
    }

    pub fn plane(&self, slot: usize) -> usize {
        debug_assert!(slot < self.slot_axes.len());
        3 * self.n_frames + slot
    }

    pub fn column(&self, entity: Entity) -> usize {
        match entity {
            Entity::Position { frame, axis } => self.position(frame, axis),
            Entity::Plane { slot, .. } => self.plane(slot),
        }
    }

    pub fn entity(&self, col: usize) -> Option<Entity> {
        if col < 3 * self.n_frames {
            Some(Entity::Position {
                frame: col / 3,
                axis: Axis::ALL[col % 3],
            })
        } else {
            let slot = col - 3 * self.n_frames;
            self.slot_axes.get(slot).map(|&axis| Entity::Plane { slot, axis })
        }
    }

    /// Human-readable column name, e.g. `p4.y` or `m7.x`.
    pub fn label(&self, col: usize) -> String {
        match self.entity(col) {
            Some(Entity::Position { frame, axis }) => format!("p{frame}.{axis}"),
            Some(Entity::Plane { slot, axis }) => format!("m{slot}.{axis}"),
            None => format!("col{col}"),
        }
    }

    /// Names a null-space direction compactly by grouping its support, e.g. `p*.x, m*.x`.
    pub fn describe_direction(&self, v: &[f64]) -> String {
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return "zero direction".into();
        }
        let support: Vec<usize> = (0..v.len().min(self.dim()))
            .filter(|&c| v[c].abs() > 1e-6 * scale)
            .collect();
        let mut groups: Vec<String> = Vec::new();
        for axis in Axis::ALL {
            let poses: Vec<usize> = support
                .iter()
                .filter_map(|&c| match self.entity(c) {
                    Some(Entity::Position { frame, axis: a }) if a == axis => Some(frame),
                    _ => None,
                })
                .collect();
            if !poses.is_empty() {
                groups.push(if poses.len() == self.n_frames && poses.len() > 1 {
                    format!("p*.{axis}")
                } else {
                    poses
                        .iter()
                        .map(|f| format!("p{f}.{axis}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                });
            }
            let planes: Vec<usize> = support
                .iter()
                .filter_map(|&c| match self.entity(c) {
                    Some(Entity::Plane { slot, axis: a }) if a == axis => Some(slot),
                    _ => None,
                })
                .collect();
            let on_axis = self.slot_axes.iter().filter(|&&a| a == axis).count();
            if !planes.is_empty() {
                groups.push(if planes.len() == on_axis && planes.len() > 1 {
                    format!("m*.{axis}")
                } else {
                    planes
                        .iter()
                        .map(|s| format!("m{s}.{axis}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                });
            }
        }
        groups.join(", ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_column() {
        let idx = ParameterIndex {
            n_frames: 4,
            slot_axes: vec![Axis::X, Axis::X, Axis::Y, Axis::Z],
        };
        assert_eq!(idx.dim(), 16);
        for c in 0..idx.dim() {
            assert_eq!(idx.column(idx.entity(c).unwrap()), c);
        }
        assert_eq!(idx.entity(16), None);
        assert_eq!(idx.label(5), "p1.z");
        assert_eq!(idx.label(14), "m2.y");
    }

    #[test]
    fn describes_gauge_direction() {
        let idx = ParameterIndex {
            n_frames: 2,
            slot_axes: vec![Axis::X, Axis::Y],
        };
        let mut v = vec![0.0; idx.dim()];
        v[0] = 1.0;
        v[3] = 1.0;
        v[6] = 1.0;
        assert_eq!(idx.describe_direction(&v), "p*.x, m0.x");
    }
}
