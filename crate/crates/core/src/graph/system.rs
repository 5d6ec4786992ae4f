use serde::{Deserialize, Serialize};

use super::{FactorGraph, GraphError, Hypothesis, ParameterIndex};
use crate::geometry::Axis;
use crate::linalg::Triplets;
use crate::scalar::Real;

/// Weight of the three rows pinning `p_0` to the origin.
pub const DEFAULT_ANCHOR_WEIGHT: f64 = 1e3;
/// Largest offset gap (m) between slots that still yields an equivalence hypothesis.
pub const DEFAULT_MAX_GAP: f64 = 1.0;

/// Row weighting of the measurement system.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Range rows scaled by `1/range_sigma`, odometry rows by `1/odom_sigma`.
    FromNoise { range_sigma: f64, odom_sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowKind {
    Range { factor: usize },
    Odometry { frame: usize, axis: Axis },
    Anchor { axis: Axis },
}

/// The linear systems over ξ. Rows of `a` and entries of `b` already carry `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSystem<T> {
    pub index: ParameterIndex,
    pub a: Triplets<T>,
    pub b: Vec<T>,
    pub weights: Vec<T>,
    pub rows: Vec<RowKind>,
    pub e: Triplets<T>,
    pub d: Triplets<T>,
}

/// Assembles `A ξ = b` with rows in a fixed order: range rows in factor order, odometry rows
/// (x, y, z per step), then the three anchor rows. `E` is built from the graph's hypotheses
/// and `D` from its range factors.
pub fn assemble_measurement_system<T: Real>(
    graph: &FactorGraph,
    anchor_weight: f64,
    weighting: &Weighting,
) -> Result<SparseSystem<T>, GraphError> {
    if graph.n_frames == 0 {
        return Err(GraphError::Empty);
    }
    if !(anchor_weight > 0.0 && anchor_weight.is_finite()) {
        return Err(GraphError::InvalidWeighting(format!("anchor weight {anchor_weight}")));
    }
    let (wr, wo) = match *weighting {
        Weighting::Unweighted => (1.0, 1.0),
        Weighting::FromNoise {
            range_sigma,
            odom_sigma,
        } => {
            if !(range_sigma > 0.0 && odom_sigma > 0.0) {
                return Err(GraphError::InvalidWeighting(format!(
                    "noise weighting needs positive sigmas, got range {range_sigma}, odometry {odom_sigma}"
                )));
            }
            (1.0 / range_sigma, 1.0 / odom_sigma)
        }
    };
    let index = graph.index();
    let dim = index.dim();
    let mut a = Triplets::new(0, dim);
    let mut b = Vec::new();
    let mut weights = Vec::new();
    let mut rows = Vec::new();
    let lit = T::lit;
    for (k, f) in graph.range_factors.iter().enumerate() {
        a.push_row(&[
            (index.plane(f.slot), lit(wr)),
            (index.position(f.frame, f.axis), lit(-wr)),
        ]);
        b.push(lit(wr * f.d));
        weights.push(lit(wr));
        rows.push(RowKind::Range { factor: k });
    }
    for f in &graph.odom_factors {
        for axis in Axis::ALL {
            a.push_row(&[
                (index.position(f.frame + 1, axis), lit(wo)),
                (index.position(f.frame, axis), lit(-wo)),
            ]);
            b.push(lit(wo * f.t[axis.index()]));
            weights.push(lit(wo));
            rows.push(RowKind::Odometry { frame: f.frame, axis });
        }
    }
    for axis in Axis::ALL {
        a.push_row(&[(index.position(0, axis), lit(anchor_weight))]);
        b.push(T::zero());
        weights.push(lit(anchor_weight));
        rows.push(RowKind::Anchor { axis });
    }
    let e = build_equivalence_matrix(&graph.hypotheses, &index);
    let d = build_topology_constraints(graph, &index);
    Ok(SparseSystem {
        index,
        a,
        b,
        weights,
        rows,
        e,
        d,
    })
}

/// All slot pairs on the same axis with the same facing whose offsets in `xi_init` differ by at
/// most `max_gap`, ordered by `(axis, a, b)`.
pub fn generate_hypotheses<T: Real>(
    graph: &FactorGraph,
    xi_init: &[T],
    max_gap: f64,
) -> Result<Vec<Hypothesis>, GraphError> {
    let index = graph.index();
    if xi_init.len() != index.dim() {
        return Err(GraphError::DimensionMismatch {
            expected: index.dim(),
            got: xi_init.len(),
        });
    }
    let mut out = Vec::new();
    for axis in Axis::ALL {
        let slots: Vec<usize> = graph.slots_on(axis).collect();
        for (i, &a) in slots.iter().enumerate() {
            for &b in &slots[i + 1..] {
                if graph.slots[a].facing != graph.slots[b].facing {
                    continue;
                }
                let gap = (xi_init[index.plane(a)] - xi_init[index.plane(b)]).abs().to_f64_lossy();
                if gap <= max_gap {
                    out.push(Hypothesis { axis, a, b });
                }
            }
        }
    }
    Ok(out)
}

/// One row `+1` at slot `a`, `−1` at slot `b` per hypothesis.
pub fn build_equivalence_matrix<T: Real>(hypotheses: &[Hypothesis], index: &ParameterIndex) -> Triplets<T> {
    let mut e = Triplets::new(0, index.dim());
    for h in hypotheses {
        e.push_row(&[(index.plane(h.a), T::one()), (index.plane(h.b), -T::one())]);
    }
    e
}

/// One row `−sign(d)·(m − p[axis]) ≤ 0` per range factor with `|d| ≥ 1e−6`, keeping every
/// plane on the side of each frame it was observed from.
pub fn build_topology_constraints<T: Real>(graph: &FactorGraph, index: &ParameterIndex) -> Triplets<T> {
    let mut d = Triplets::new(0, index.dim());
    for f in graph.range_factors.iter().filter(|f| f.d.abs() >= 1e-6) {
        let s = T::lit(f.d.signum());
        d.push_row(&[(index.plane(f.slot), -s), (index.position(f.frame, f.axis), s)]);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::graph::factor_graph::tests::seg;

    #[test]
    fn counts_rows() {
        let segs = [
            seg(0, 0, Axis::X, 2.0),
            seg(1, 1, Axis::X, 1.8),
            seg(2, 2, Axis::Y, -1.0),
        ];
        let g = build_graph(&segs, &[], &[[0.2, 0.0, 0.0]; 2]).unwrap();
        let sys = assemble_measurement_system::<f64>(&g, DEFAULT_ANCHOR_WEIGHT, &Weighting::Unweighted).unwrap();
        assert_eq!(sys.a.nrows, 3 + 3 * 2 + 3);
        assert_eq!(sys.b.len(), sys.a.nrows);
        assert_eq!(sys.d.nrows, 3);
        assert_eq!(sys.e.nrows, 0);
        let csr = sys.a.to_csr();
        for r in 0..sys.a.nrows {
            let want = if r >= sys.a.nrows - 3 { 1 } else { 2 };
            assert_eq!(csr.row_nnz(r), want);
        }
    }

    #[test]
    fn weighting_scales_rows() {
        let g = build_graph(&[seg(0, 0, Axis::X, 2.0)], &[], &[[1.0, 0.0, 0.0]]).unwrap();
        let w = Weighting::FromNoise {
            range_sigma: 0.02,
            odom_sigma: 0.1,
        };
        let sys = assemble_measurement_system::<f64>(&g, 1e3, &w).unwrap();
        assert!((sys.b[0] - 100.0).abs() < 1e-12);
        assert!((sys.b[1] - 10.0).abs() < 1e-12);
        let bad = Weighting::FromNoise {
            range_sigma: 0.0,
            odom_sigma: 0.1,
        };
        assert!(assemble_measurement_system::<f64>(&g, 1e3, &bad).is_err());
    }

    #[test]
    fn hypotheses_respect_gap_and_facing() {
        let segs = [
            seg(0, 0, Axis::X, 3.0),
            seg(1, 0, Axis::X, 3.1),
            seg(2, 0, Axis::X, -3.0),
        ];
        let g = build_graph(&segs, &[], &[]).unwrap();
        let idx = g.index();
        let mut xi = vec![0.0; idx.dim()];
        xi[idx.plane(0)] = 3.0;
        xi[idx.plane(1)] = 3.1;
        xi[idx.plane(2)] = 3.0;
        let h = generate_hypotheses(&g, &xi, 0.5).unwrap();
        assert_eq!(
            h,
            vec![Hypothesis {
                axis: Axis::X,
                a: 0,
                b: 1
            }]
        );
        assert!(generate_hypotheses(&g, &xi, 0.05).unwrap().is_empty());
        assert!(generate_hypotheses(&g, &xi[1..], 0.5).is_err());
    }

    #[test]
    fn equivalence_rows_sum_to_zero() {
        let idx = ParameterIndex {
            n_frames: 1,
            slot_axes: vec![Axis::X, Axis::X],
        };
        let e = build_equivalence_matrix::<f64>(
            &[Hypothesis {
                axis: Axis::X,
                a: 0,
                b: 1,
            }],
            &idx,
        );
        assert_eq!(e.to_csr().to_dense(), vec![vec![0.0, 0.0, 0.0, 1.0, -1.0]]);
        assert_eq!(build_equivalence_matrix::<f64>(&[], &idx).nrows, 0);
    }

    #[test]
    fn topology_signs() {
        let segs = [
            seg(0, 0, Axis::X, 3.0),
            seg(1, 0, Axis::X, -3.0),
            seg(2, 0, Axis::Y, 1e-9),
        ];
        let g = build_graph(&segs, &[], &[]).unwrap();
        let idx = g.index();
        let d = build_topology_constraints::<f64>(&g, &idx).to_csr();
        assert_eq!(d.nrows(), 2);
        // d = +3: −(m − p) ≤ 0, i.e. m ≥ p.
        assert_eq!(
            (d.get(0, idx.plane(0)), d.get(0, idx.position(0, Axis::X))),
            (-1.0, 1.0)
        );
        assert_eq!(
            (d.get(1, idx.plane(1)), d.get(1, idx.position(0, Axis::X))),
            (1.0, -1.0)
        );
    }
}
