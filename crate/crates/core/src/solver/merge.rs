use serde::{Deserialize, Serialize};

use super::active_set::constrained_least_squares;
use super::columns::ColumnMap;
use super::SolverError;
use crate::geometry::{Axis, Facing, Rect};
use crate::graph::{FactorGraph, Hypothesis, SparseSystem};
use crate::observation::SegmentObservation;
use crate::scalar::Real;
use crate::union_find::DisjointSets;

/// Hypotheses enforced after thresholding and the slot partition they induce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSet {
    /// Accepted hypothesis indices, ascending.
    pub accepted: Vec<usize>,
    /// Partition of all plane slots (singletons included), ordered by smallest member.
    pub classes: Vec<Vec<usize>>,
}

impl MergeSet {
    pub fn from_accepted(hypotheses: &[Hypothesis], accepted: Vec<usize>, n_slots: usize) -> Self {
        let mut sets = DisjointSets::new(n_slots);
        for &h in &accepted {
            sets.union(hypotheses[h].a, hypotheses[h].b);
        }
        Self {
            accepted,
            classes: sets.classes(),
        }
    }

    /// Class index of every slot.
    pub fn slot_classes(&self, n_slots: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_slots];
        for (k, class) in self.classes.iter().enumerate() {
            for &s in class {
                out[s] = k;
            }
        }
        out
    }
}

/// Accepts hypothesis `r` when `|(E ξ)_r| ≤ μ` and closes the accepted pairs transitively.
/// Row `r` of `e` must encode `hypotheses[r]`.
pub fn threshold_equivalences<T: Real>(
    e: &crate::linalg::CsrMatrix<T>,
    xi: &[T],
    mu: T,
    hypotheses: &[Hypothesis],
    n_slots: usize,
) -> Result<MergeSet, SolverError> {
    if !(mu > T::zero()) {
        return Err(SolverError::InvalidMu(mu.to_f64_lossy()));
    }
    if e.nrows() != hypotheses.len() || e.ncols() != xi.len() {
        return Err(SolverError::DimensionMismatch(format!(
            "E is {}x{} for {} hypotheses and ξ of length {}",
            e.nrows(),
            e.ncols(),
            hypotheses.len(),
            xi.len()
        )));
    }
    let gaps = e.mul_vec(xi);
    let accepted = (0..gaps.len()).filter(|&r| gaps[r].abs() <= mu).collect();
    Ok(MergeSet::from_accepted(hypotheses, accepted, n_slots))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedModel<T> {
    /// Full ξ; slots in one class hold the identical offset.
    pub xi: Vec<T>,
    pub residual: T,
    pub max_violation: T,
    /// Multipliers of the topology rows.
    pub multipliers: Vec<T>,
    pub active_constraints: Vec<usize>,
    pub converged: bool,
    /// Merge class of every slot.
    pub slot_class: Vec<usize>,
    pub class_offsets: Vec<T>,
}

impl<T> ResolvedModel<T> {
    pub fn n_structures(&self) -> usize {
        self.class_offsets.len()
    }
}

/// Re-solves the measurement system with every merge class sharing one offset column,
/// subject to the topology constraints.
pub fn collapse_and_resolve<T: Real>(
    graph: &FactorGraph,
    system: &SparseSystem<T>,
    merges: &MergeSet,
) -> Result<ResolvedModel<T>, SolverError> {
    let index = &system.index;
    let n_slots = graph.slots.len();
    if index.n_slots() != n_slots {
        return Err(SolverError::DimensionMismatch(format!(
            "system has {} slots, graph {}",
            index.n_slots(),
            n_slots
        )));
    }
    let mut pairs = Vec::new();
    for class in &merges.classes {
        let first = class[0];
        for &s in &class[1..] {
            let (a, b) = (&graph.slots[first], &graph.slots[s]);
            if a.axis != b.axis {
                return Err(SolverError::CrossAxisMerge { a: first, b: s });
            }
            if a.facing != b.facing {
                return Err(SolverError::OppositeFacingMerge { a: first, b: s });
            }
            pairs.push((index.plane(first), index.plane(s)));
        }
    }
    let base = ColumnMap::from_pairs(index.dim(), pairs);
    let sol = constrained_least_squares(&system.a.to_csr(), &system.b, &system.d.to_csr(), &base)?;
    let slot_class = merges.slot_classes(n_slots);
    let class_offsets = merges.classes.iter().map(|c| sol.xi[index.plane(c[0])]).collect();
    Ok(ResolvedModel {
        xi: sol.xi,
        residual: sol.residual,
        max_violation: sol.max_violation,
        multipliers: sol.multipliers,
        active_constraints: sol.active,
        converged: sol.converged,
        slot_class,
        class_offsets,
    })
}

/// Outcome of [`fit_within_ball`].
#[derive(Debug, Clone)]
pub struct BallFit<T> {
    pub merges: MergeSet,
    pub resolved: ResolvedModel<T>,
    /// Thresholded hypotheses given up to bring the re-solved residual back within δ.
    pub dropped: Vec<usize>,
}

/// Re-solves with the thresholded merges and, when that leaves the residual above `delta`,
/// shrinks the merge set until it fits.
///
/// Rows that vanish at the selection optimum (`|gap| ≤ zero_tol`) always fit, since the
/// optimum itself is a point of the ball on their classes, so only rows with a nonzero gap
/// are candidates. Each round drops the candidate whose removal lowers the re-solved
/// residual the most; when no single removal splits a class, the largest gap goes.
pub fn fit_within_ball<T: Real>(
    graph: &FactorGraph,
    system: &SparseSystem<T>,
    gaps: &[T],
    merges: &MergeSet,
    delta: T,
    zero_tol: T,
) -> Result<BallFit<T>, SolverError> {
    let n_slots = graph.slots.len();
    let limit = delta * (T::one() + T::lit(1e-9));
    let hyps = &graph.hypotheses;
    let mut kept = merges.accepted.clone();
    let mut current = merges.clone();
    let mut best = collapse_and_resolve(graph, system, &current)?;
    while best.residual > limit {
        let mut candidates: Vec<usize> = kept.iter().copied().filter(|&r| gaps[r].abs() > zero_tol).collect();
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|&x, &y| gaps[y].abs().partial_cmp(&gaps[x].abs()).unwrap().then(x.cmp(&y)));
        let classes = current.slot_classes(n_slots);
        let mut choice: Option<(usize, MergeSet, ResolvedModel<T>)> = None;
        for &r in &candidates {
            let trial: Vec<usize> = kept.iter().copied().filter(|&k| k != r).collect();
            let candidate = MergeSet::from_accepted(hyps, trial, n_slots);
            if candidate.slot_classes(n_slots) == classes {
                continue;
            }
            let sol = collapse_and_resolve(graph, system, &candidate)?;
            if choice.as_ref().is_none_or(|(_, _, s)| sol.residual < s.residual) {
                choice = Some((r, candidate, sol));
            }
        }
        let (r, candidate, sol) = match choice {
            Some(c) => c,
            None => {
                let r = candidates[0];
                let trial: Vec<usize> = kept.iter().copied().filter(|&k| k != r).collect();
                let candidate = MergeSet::from_accepted(hyps, trial, n_slots);
                let sol = best.clone();
                (r, candidate, sol)
            }
        };
        kept.retain(|&k| k != r);
        current = candidate;
        best = sol;
    }
    let classes = current.slot_classes(n_slots);
    let (accepted, dropped): (Vec<usize>, Vec<usize>) = merges
        .accepted
        .iter()
        .partition(|&&r| classes[hyps[r].a] == classes[hyps[r].b]);
    Ok(BallFit {
        merges: MergeSet::from_accepted(hyps, accepted, n_slots),
        resolved: best,
        dropped,
    })
}

/// A final layout plane with the world-frame extent of its supporting segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutStructure {
    pub id: usize,
    pub axis: Axis,
    pub facing: Facing,
    pub offset: f64,
    /// Bounding rectangle in the plane's `(u, v)` world coordinates.
    pub extent: Rect,
    pub slots: Vec<usize>,
    pub segments: Vec<usize>,
}

/// One structure per merge class, its extent the union of member segment extents placed at
/// the optimized positions of the frames that observed them.
pub fn model_extents<T: Real>(
    graph: &FactorGraph,
    xi: &[T],
    segments: &[SegmentObservation],
    merges: &MergeSet,
) -> Result<Vec<LayoutStructure>, SolverError> {
    let index = graph.index();
    if xi.len() != index.dim() {
        return Err(SolverError::DimensionMismatch(format!(
            "ξ has length {}, expected {}",
            xi.len(),
            index.dim()
        )));
    }
    let by_id: std::collections::HashMap<usize, &SegmentObservation> =
        segments.iter().map(|s| (s.segment_id, s)).collect();
    let mut out = Vec::with_capacity(merges.classes.len());
    for (id, class) in merges.classes.iter().enumerate() {
        let slot = &graph.slots[class[0]];
        let (u, v) = slot.axis.in_plane();
        let mut members: Vec<usize> = class
            .iter()
            .flat_map(|&s| graph.slots[s].segments.iter().copied())
            .collect();
        members.sort_unstable();
        let mut extent: Option<Rect> = None;
        for sid in &members {
            let Some(seg) = by_id.get(sid) else { continue };
            let pu = xi[index.position(seg.frame_index, u)].to_f64_lossy();
            let pv = xi[index.position(seg.frame_index, v)].to_f64_lossy();
            let placed = seg.extent.translated(pu, pv);
            extent = Some(extent.map_or(placed, |e| e.union(&placed)));
        }
        out.push(LayoutStructure {
            id,
            axis: slot.axis,
            facing: slot.facing,
            offset: xi[index.plane(class[0])].to_f64_lossy(),
            extent: extent.unwrap_or(Rect::new([0.0, 0.0], [0.0, 0.0])),
            slots: class.clone(),
            segments: members,
        });
    }
    Ok(out)
}
