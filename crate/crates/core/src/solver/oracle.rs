use rayon::prelude::*;
use serde::Serialize;

use super::active_set::constrained_least_squares;
use super::columns::ColumnMap;
use super::selection::FEAS_TOL;
use super::SolverError;
use crate::linalg::CsrMatrix;
use crate::scalar::{norm1, Real};

/// Largest hypothesis count the exhaustive search accepts by default.
pub const DEFAULT_K_MAX: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L0Solution<T> {
    /// Enforced rows of `E`, ascending.
    pub subset: Vec<usize>,
    pub xi: Vec<T>,
    pub residual: T,
    /// `‖E ξ‖₁` at the returned point.
    pub objective_l1: T,
    pub subsets_evaluated: usize,
}

/// Column pairs `(a, b)` of equivalence rows `+1·ξ_a − 1·ξ_b`.
pub fn parse_equivalence_rows<T: Real>(e: &CsrMatrix<T>) -> Result<Vec<(usize, usize)>, SolverError> {
    (0..e.nrows())
        .map(|r| {
            let entries: Vec<(usize, T)> = e.row(r).collect();
            match entries.as_slice() {
                [(c0, v0), (c1, v1)] if *v0 == T::one() && *v1 == -T::one() => Ok((*c0, *c1)),
                [(c0, v0), (c1, v1)] if *v0 == -T::one() && *v1 == T::one() => Ok((*c1, *c0)),
                _ => Err(SolverError::MalformedEquivalence { row: r }),
            }
        })
        .collect()
}

/// Lexicographic successor of a k-combination of `0..n`, in place.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exhaustive ℓ0 model selection: the largest set of equivalence rows that can be enforced
/// exactly while the topology-constrained least-squares residual stays within `delta`.
///
/// Subsets are searched by decreasing size and, within a size, in lexicographic order, so
/// ties resolve to the lexicographically smallest subset. Refuses more than `k_max` rows.
pub fn brute_force_l0<T: Real>(
    e: &CsrMatrix<T>,
    a: &CsrMatrix<T>,
    b: &[T],
    delta: T,
    d: &CsrMatrix<T>,
    k_max: usize,
) -> Result<L0Solution<T>, SolverError> {
    let k = e.nrows();
    if k > k_max {
        return Err(SolverError::TooManyHypotheses { k, k_max });
    }
    let pairs = parse_equivalence_rows(e)?;
    let n = a.ncols();
    let limit = delta * (T::one() + T::lit(1e-9));
    let evaluate = |subset: &[usize]| {
        let map = ColumnMap::from_pairs(n, subset.iter().map(|&r| pairs[r]));
        constrained_least_squares(a, b, d, &map)
    };
    let mut evaluated = 0;
    for size in (0..=k).rev() {
        let mut combos = Vec::new();
        let mut c: Vec<usize> = (0..size).collect();
        loop {
            combos.push(c.clone());
            if !next_combination(&mut c, k) {
                break;
            }
        }
        evaluated += combos.len();
        let results = combos.par_iter().map(|s| evaluate(s)).collect::<Result<Vec<_>, _>>()?;
        let hit = combos
            .into_iter()
            .zip(results)
            .find(|(_, r)| r.residual <= limit && r.max_violation <= T::lit(FEAS_TOL));
        if let Some((subset, sol)) = hit {
            let objective_l1 = norm1(&e.mul_vec(&sol.xi));
            return Ok(L0Solution {
                subset,
                residual: sol.residual,
                xi: sol.xi,
                objective_l1,
                subsets_evaluated: evaluated,
            });
        }
        if size == 0 {
            let base = evaluate(&[])?;
            return Err(SolverError::Infeasible {
                delta: delta.to_f64_lossy(),
                min_residual: base.residual.to_f64_lossy(),
                certificate: base.xi.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
    }
    unreachable!("the empty subset is always evaluated")
}
