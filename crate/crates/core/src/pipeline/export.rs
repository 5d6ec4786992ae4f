use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geometry::{Axis, Vec3};
use crate::solver::LayoutStructure;

/// A reconstructed floor plan: layout structures and the optimized trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapModel {
    pub structures: Vec<LayoutStructure>,
    pub poses: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Svg,
    Json,
}

impl std::str::FromStr for MapFormat {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "svg" => Ok(MapFormat::Svg),
            "json" => Ok(MapFormat::Json),
            _ => Err(PipelineError::UnknownFormat(s.to_string())),
        }
    }
}

impl MapModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Export(format!("map JSON: {e}")))
    }
}

pub fn export_map(model: &MapModel, format: MapFormat) -> String {
    match format {
        MapFormat::Svg => render_svg(model),
        MapFormat::Json => model.to_json(),
    }
}

const PX_PER_M: f64 = 40.0;
const MARGIN: f64 = 20.0;

/// A wall as a segment `(x0, y0) → (x1, y1)` in world meters.
fn wall_line(s: &LayoutStructure) -> Option<[f64; 4]> {
    match s.axis {
        Axis::X => Some([s.offset, s.extent.min[0], s.offset, s.extent.max[0]]),
        Axis::Y => Some([s.extent.min[0], s.offset, s.extent.max[0], s.offset]),
        Axis::Z => None,
    }
}

/// Birds-eye view: x planes in red, y planes in green, the trajectory in black. Floor and
/// ceiling are omitted. World y points up.
pub fn render_svg(model: &MapModel) -> String {
    let lines: Vec<(Axis, [f64; 4])> = model
        .structures
        .iter()
        .filter_map(|s| wall_line(s).map(|l| (s.axis, l)))
        .collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut include = |x: f64, y: f64| {
        lo = [lo[0].min(x), lo[1].min(y)];
        hi = [hi[0].max(x), hi[1].max(y)];
    };
    for (_, l) in &lines {
        include(l[0], l[1]);
        include(l[2], l[3]);
    }
    for p in &model.poses {
        include(p[0], p[1]);
    }
    if !lo[0].is_finite() {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    let w = (hi[0] - lo[0]) * PX_PER_M + 2.0 * MARGIN;
    let h = (hi[1] - lo[1]) * PX_PER_M + 2.0 * MARGIN;
    let px = |x: f64| (x - lo[0]) * PX_PER_M + MARGIN;
    let py = |y: f64| (hi[1] - y) * PX_PER_M + MARGIN;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (axis, l) in &lines {
        let color = if *axis == Axis::X { "red" } else { "green" };
        let _ = writeln!(
            out,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{color}" stroke-width="2"/>"#,
            px(l[0]),
            py(l[1]),
            px(l[2]),
            py(l[3])
        );
    }
    if !model.poses.is_empty() {
        let pts: Vec<String> = model
            .poses
            .iter()
            .map(|p| format!("{:.3},{:.3}", px(p[0]), py(p[1])))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1"/>"#,
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Facing, Rect};

    fn model() -> MapModel {
        MapModel {
            structures: vec![
                LayoutStructure {
                    id: 0,
                    axis: Axis::X,
                    facing: Facing::Positive,
                    offset: -0.1,
                    extent: Rect::new([-1.0, 0.0], [2.0, 2.5]),
                    slots: vec![0, 3],
                    segments: vec![1, 2, 9],
                },
                LayoutStructure {
                    id: 1,
                    axis: Axis::Z,
                    facing: Facing::Positive,
                    offset: -1.3,
                    extent: Rect::new([0.0, 0.0], [4.0, 3.0]),
                    slots: vec![5],
                    segments: vec![4],
                },
            ],
            poses: vec![[0.0, 0.0, 0.0], [0.1 + 0.2, 1.0 / 3.0, 0.0]],
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let m = model();
        assert_eq!(MapModel::from_json(&export_map(&m, MapFormat::Json)).unwrap(), m);
    }

    #[test]
    fn empty_model_renders_trajectory_only() {
        let m = MapModel {
            structures: vec![],
            poses: vec![[0.0; 3], [1.0, 0.0, 0.0]],
        };
        let svg = render_svg(&m);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("<line"));
        let nothing = render_svg(&MapModel::default());
        assert!(!nothing.contains("<polyline"));
    }

    #[test]
    fn walls_are_colored_by_axis_and_floor_skipped() {
        let svg = render_svg(&model());
        assert_eq!(svg.matches("stroke=\"red\"").count(), 1);
        assert!(!svg.contains("green"));
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert!(matches!(
            "png".parse::<MapFormat>(),
            Err(PipelineError::UnknownFormat(_))
        ));
        assert_eq!("SVG".parse::<MapFormat>().unwrap(), MapFormat::Svg);
    }
}
