use std::collections::VecDeque;

use thiserror::Error;

use super::sparse::CsrMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    /// The matrix is (numerically) singular. `null_vector` spans the detected null direction in
    /// the original column order, scaled to unit max-norm.
    #[error("matrix is singular: pivot of column {column} vanished")]
    ZeroPivot { column: usize, null_vector: Vec<f64> },
}

/// Cholesky factor `P K Pᵀ = L Lᵀ` of a symmetric positive definite sparse matrix, stored as a
/// row envelope (skyline) under a reverse Cuthill-McKee ordering.
#[derive(Debug, Clone)]
pub struct SparseCholesky<T> {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    first: Vec<usize>,
    ptr: Vec<usize>,
    l: Vec<T>,
}

impl<T: Real> SparseCholesky<T> {
    pub fn factor(k: &CsrMatrix<T>) -> Result<Self, FactorError> {
        if k.nrows() != k.ncols() {
            return Err(FactorError::NotSquare {
                rows: k.nrows(),
                cols: k.ncols(),
            });
        }
        let perm = reverse_cuthill_mckee(k);
        Self::factor_with_ordering(k, perm)
    }

    /// Factors with an explicit ordering `perm` (new index → original index).
    pub fn factor_with_ordering(k: &CsrMatrix<T>, perm: Vec<usize>) -> Result<Self, FactorError> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(FactorError::NotSquare {
                rows: n,
                cols: k.ncols(),
            });
        }
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, f) in first.iter_mut().enumerate() {
            for (c, _) in k.row(perm[i]) {
                *f = (*f).min(iperm[c]);
            }
        }
        let mut ptr = vec![0; n + 1];
        for i in 0..n {
            ptr[i + 1] = ptr[i] + (i - first[i] + 1);
        }
        let mut l = vec![T::zero(); ptr[n]];
        let mut diag = vec![T::zero(); n];
        for i in 0..n {
            for (c, v) in k.row(perm[i]) {
                let j = iperm[c];
                if j <= i {
                    l[ptr[i] + j - first[i]] = v;
                }
                if j == i {
                    diag[i] = v;
                }
            }
        }

        let tol = T::epsilon().sqrt() * T::lit(1e-2);
        let mut pinned = vec![false; n];
        let mut first_pinned = None;
        for i in 0..n {
            let fi = first[i];
            let (head, tail) = l.split_at_mut(ptr[i]);
            let row_i = &mut tail[..ptr[i + 1] - ptr[i]];
            for j in fi..i {
                if pinned[j] {
                    row_i[j - fi] = T::zero();
                    continue;
                }
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &head[ptr[j]..ptr[j + 1]];
                let mut s = row_i[j - fi];
                for kk in k0..j {
                    s -= row_i[kk - fi] * row_j[kk - fj];
                }
                row_i[j - fi] = s / row_j[j - fj];
            }
            let mut s = row_i[i - fi];
            for kk in fi..i {
                s -= row_i[kk - fi] * row_i[kk - fi];
            }
            if diag[i] > T::zero() && s > tol * diag[i] {
                row_i[i - fi] = s.sqrt();
            } else {
                pinned[i] = true;
                first_pinned.get_or_insert(i);
                for x in row_i.iter_mut() {
                    *x = T::zero();
                }
                row_i[i - fi] = T::one();
            }
        }

        let factor = Self {
            n,
            perm,
            iperm,
            first,
            ptr,
            l,
        };
        if let Some(i0) = first_pinned {
            let c0 = factor.perm[i0];
            let mut rhs = vec![T::zero(); n];
            for (r, v) in k.row(c0) {
                if r != c0 && !pinned[factor.iperm[r]] {
                    rhs[r] = -v;
                }
            }
            let mut v = factor.solve(&rhs);
            v[c0] = T::one();
            let scale = v.iter().fold(0.0f64, |m, x| m.max(x.to_f64_lossy().abs()));
            let null_vector = v.iter().map(|x| x.to_f64_lossy() / scale).collect();
            return Err(FactorError::ZeroPivot {
                column: c0,
                null_vector,
            });
        }
        Ok(factor)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.l.len()
    }

    /// Solves `K x = rhs`.
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        assert_eq!(rhs.len(), self.n);
        let mut y: Vec<T> = self.perm.iter().map(|&o| rhs[o]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.l[self.ptr[i]..self.ptr[i + 1]];
            let mut s = y[i];
            for kk in fi..i {
                s -= row[kk - fi] * y[kk];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.l[self.ptr[i]..self.ptr[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for kk in fi..i {
                y[kk] -= row[kk - fi] * xi;
            }
        }
        let mut x = vec![T::zero(); self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solves `K x = rhs` followed by `steps` rounds of iterative refinement against `k`.
    pub fn solve_refined(&self, k: &CsrMatrix<T>, rhs: &[T], steps: usize) -> Vec<T> {
        let mut x = self.solve(rhs);
        for _ in 0..steps {
            let kx = k.mul_vec(&x);
            let r: Vec<T> = rhs.iter().zip(&kx).map(|(&b, &v)| b - v).collect();
            let dx = self.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        x
    }
}

/// Reverse Cuthill-McKee ordering of a structurally symmetric matrix (new index → original).
pub fn reverse_cuthill_mckee<T: Real>(k: &CsrMatrix<T>) -> Vec<usize> {
    let n = k.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| k.row(r).map(|(c, _)| c).filter(|&c| c != r).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> Vec<Vec<usize>> {
        let mut seen = visited.to_vec();
        seen[start] = true;
        let mut levels = vec![vec![start]];
        loop {
            let mut next = Vec::new();
            for &u in levels.last().unwrap() {
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    };

    while order.len() < n {
        let mut start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        let mut ecc = bfs_levels(start, &visited).len();
        for _ in 0..4 {
            let levels = bfs_levels(start, &visited);
            let cand = *levels.last().unwrap().iter().min_by_key(|&&i| (degree[i], i)).unwrap();
            let cand_ecc = bfs_levels(cand, &visited).len();
            if cand_ecc > ecc {
                start = cand;
                ecc = cand_ecc;
            } else {
                break;
            }
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_plus(n: usize, shift: f64) -> CsrMatrix<f64> {
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0 + shift));
            if i + 1 < n {
                e.push((i, i + 1, -1.0));
                e.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, e)
    }

    #[test]
    fn solves_tridiagonal() {
        let k = laplacian_plus(30, 0.1);
        let f = SparseCholesky::factor(&k).unwrap();
        let x_true: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let b = k.mul_vec(&x_true);
        let x = f.solve_refined(&k, &b, 1);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_constant_null_space() {
        // Path Laplacian: null space is the constant vector.
        let mut e = Vec::new();
        let n = 6;
        for i in 0..n - 1 {
            e.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
        let k = CsrMatrix::from_triplets(n, n, e);
        match SparseCholesky::factor(&k) {
            Err(FactorError::ZeroPivot { null_vector, .. }) => {
                for v in null_vector {
                    assert!((v - 1.0).abs() < 1e-9, "{v}");
                }
            }
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let k = laplacian_plus(17, 0.0);
        let mut p = reverse_cuthill_mckee(&k);
        p.sort();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }
}
