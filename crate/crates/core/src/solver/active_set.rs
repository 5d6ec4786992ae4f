use serde::Serialize;

use super::columns::ColumnMap;
use super::lsq::{normal_solve, residual_vec};
use super::SolverError;
use crate::linalg::{CsrMatrix, SparseCholesky, Triplets};
use crate::scalar::{norm2, norm_inf, Real};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedLs<T> {
    pub xi: Vec<T>,
    pub residual: T,
    /// KKT multiplier of every `D` row (zero off the active set).
    pub multipliers: Vec<T>,
    pub active: Vec<usize>,
    pub max_violation: T,
    pub iterations: usize,
    /// The final active set passed the multiplier sign test.
    pub converged: bool,
}

/// The two columns a topology row ties together when it holds with equality.
fn row_pair<T: Real>(d: &CsrMatrix<T>, r: usize) -> Result<(usize, usize), SolverError> {
    let entries: Vec<(usize, T)> = d.row(r).collect();
    match entries.as_slice() {
        [(c0, v0), (c1, v1)] if (*v0 + *v1).abs() <= T::lit(1e-12) * v0.abs() => Ok((*c0, *c1)),
        _ => Err(SolverError::DimensionMismatch(format!(
            "topology row {r} must have two entries of equal magnitude and opposite sign"
        ))),
    }
}

struct Problem<'a, T> {
    a: &'a CsrMatrix<T>,
    b: &'a [T],
    d: &'a CsrMatrix<T>,
    base: &'a ColumnMap,
    pairs: Vec<(usize, usize)>,
}

impl<T: Real> Problem<'_, T> {
    /// Least squares with the base equalities and every working-set row held as an equality.
    fn solve_eq(&self, working: &[bool]) -> Result<Vec<T>, SolverError> {
        let mut sets = self.base.to_sets();
        for (r, _) in working.iter().enumerate().filter(|(_, &w)| w) {
            let (c0, c1) = self.pairs[r];
            sets.union(c0, c1);
        }
        let map = ColumnMap::from_sets(&mut sets);
        let reduced = normal_solve(&self.a.remap_columns(&map.map, map.ncols), self.b)?;
        Ok(map.expand(&reduced))
    }

    /// Multipliers of the working-set rows at an equality-constrained optimum `x`, taken as
    /// the minimum-norm solution of `D_Wᵀ λ = −∇` in the base-reduced space.
    fn multipliers(&self, working: &[usize], x: &[T]) -> Result<Vec<T>, SolverError> {
        if working.is_empty() {
            return Ok(Vec::new());
        }
        let grad = self.a.tr_mul_vec(&residual_vec(self.a, x, self.b));
        let mut g = vec![T::zero(); self.base.ncols];
        for (j, &v) in grad.iter().enumerate() {
            g[self.base.map[j]] += v;
        }
        let dw = self
            .d
            .select_rows(working)
            .remap_columns(&self.base.map, self.base.ncols);
        let gram = dw.transpose().gram();
        let reg = T::lit(1e-12) * (0..gram.nrows()).fold(T::one(), |m, i| m.max(gram.get(i, i)));
        let mut t = gram.triplets();
        for i in 0..working.len() {
            t.push(i, i, reg);
        }
        let k = Triplets {
            nrows: working.len(),
            ncols: working.len(),
            entries: t.entries,
        }
        .to_csr();
        let rhs: Vec<T> = dw.mul_vec(&g).into_iter().map(|v| -v).collect();
        Ok(SparseCholesky::factor(&k)?.solve_refined(&k, &rhs, 1))
    }
}

/// Minimizes `‖A ξ − b‖₂` subject to `D ξ ≤ 0`, with the column equalities of `base` imposed
/// exactly by sharing columns.
///
/// Primal active-set method: violated rows are first added as equalities until the iterate is
/// feasible, then rows with negative multipliers are released and blocking rows added along
/// each step, keeping every iterate feasible. Each row of `D` must tie two columns with
/// opposite signs, so holding it with equality is again a column merge.
pub fn constrained_least_squares<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    d: &CsrMatrix<T>,
    base: &ColumnMap,
) -> Result<ConstrainedLs<T>, SolverError> {
    let n = a.ncols();
    if b.len() != a.nrows() || d.ncols() != n || base.len() != n {
        return Err(SolverError::DimensionMismatch(format!(
            "A {}x{}, b {}, D {}x{}, column map {}",
            a.nrows(),
            n,
            b.len(),
            d.nrows(),
            d.ncols(),
            base.len()
        )));
    }
    let m = d.nrows();
    let pairs = (0..m).map(|r| row_pair(d, r)).collect::<Result<Vec<_>, _>>()?;
    let problem = Problem { a, b, d, base, pairs };
    let lam_tol = T::lit(1e-9) * norm_inf(&a.tr_mul_vec(b)).max(T::one());
    let feas_tol = |x: &[T]| T::lit(1e-11) * norm_inf(x).max(T::one());

    let mut working = vec![false; m];
    let mut x = problem.solve_eq(&working)?;
    let mut iterations = 1;
    let cap = 100 + 5 * m;
    loop {
        let dx = d.mul_vec(&x);
        let tol = feas_tol(&x);
        let mut grew = false;
        for r in 0..m {
            if !working[r] && dx[r] > tol {
                working[r] = true;
                grew = true;
            }
        }
        if !grew || iterations >= cap {
            break;
        }
        x = problem.solve_eq(&working)?;
        iterations += 1;
    }

    let mut converged = false;
    let mut lambda: Vec<T> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    while iterations < cap {
        let xw = problem.solve_eq(&working)?;
        iterations += 1;
        let p: Vec<T> = xw.iter().zip(&x).map(|(&u, &v)| u - v).collect();
        if norm_inf(&p) <= T::lit(1e-12) * norm_inf(&x).max(T::one()) {
            x = xw;
            active = (0..m).filter(|&r| working[r]).collect();
            lambda = problem.multipliers(&active, &x)?;
            let worst = (0..active.len()).min_by(|&i, &j| lambda[i].partial_cmp(&lambda[j]).unwrap());
            match worst {
                Some(i) if lambda[i] < -lam_tol => working[active[i]] = false,
                _ => {
                    converged = true;
                    break;
                }
            }
            continue;
        }
        let dx = d.mul_vec(&x);
        let dp = d.mul_vec(&p);
        let mut alpha = T::one();
        let mut blocking = None;
        for r in (0..m).filter(|&r| !working[r]) {
            if dp[r] > T::lit(1e-14) * norm_inf(&p) {
                let step = (-dx[r] / dp[r]).max(T::zero());
                if step < alpha {
                    alpha = step;
                    blocking = Some(r);
                }
            }
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * *pi;
        }
        if let Some(r) = blocking {
            working[r] = true;
        }
    }
    if !converged {
        active = (0..m).filter(|&r| working[r]).collect();
        lambda = problem.multipliers(&active, &x)?;
    }
    let mut multipliers = vec![T::zero(); m];
    for (&r, &l) in active.iter().zip(&lambda) {
        multipliers[r] = l;
    }
    let max_violation = d.mul_vec(&x).into_iter().fold(T::zero(), |acc, v| acc.max(v));
    Ok(ConstrainedLs {
        residual: norm2(&residual_vec(a, &x, b)),
        xi: x,
        multipliers,
        active,
        max_violation,
        iterations,
        converged,
    })
}
