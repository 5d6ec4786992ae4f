use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Coordinate-form sparse matrix. Duplicate entries are summed on conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplets<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: Real> Triplets<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    /// Appends a new row with the given `(column, value)` entries and returns its index.
    pub fn push_row(&mut self, entries: &[(usize, T)]) -> usize {
        let row = self.nrows;
        self.nrows += 1;
        for &(c, v) in entries {
            debug_assert!(c < self.ncols);
            self.entries.push((row, c, v));
        }
        row
    }

    pub fn push(&mut self, r: usize, c: usize, v: T) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.entries.push((r, c, v));
    }

    pub fn to_csr(&self) -> CsrMatrix<T> {
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.entries.clone())
    }
}

/// Compressed sparse row matrix with sorted, duplicate-free columns per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds from unordered triplets, summing duplicates and dropping exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, T)>) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut vals: Vec<T> = Vec::with_capacity(entries.len());
        let mut rows: Vec<usize> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if let (Some(&lr), Some(&lc)) = (rows.last(), col_idx.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            col_idx.push(c);
            vals.push(v);
        }
        let keep: Vec<bool> = vals.iter().map(|v| *v != T::zero()).collect();
        let mut ci = Vec::with_capacity(col_idx.len());
        let mut vv = Vec::with_capacity(vals.len());
        for (k, &kp) in keep.iter().enumerate() {
            if kp {
                row_ptr[rows[k] + 1] += 1;
                ci.push(col_idx[k]);
                vv.push(vals[k]);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx: ci,
            vals: vv,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.col_idx[s..e].binary_search(&c) {
            Ok(k) => self.vals[s + k],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> Triplets<T> {
        let mut t = Triplets::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.entries.push((r, c, v));
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Computes `Aᵀ y`.
    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![T::zero(); self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == T::zero() {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                entries.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, entries)
    }

    /// Appends `scale · AᵀA` to a triplet list of an `ncols × ncols` matrix.
    pub fn gram_into(&self, scale: T, out: &mut Vec<(usize, usize, T)>) {
        for r in 0..self.nrows {
            let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for i in s..e {
                for j in s..e {
                    out.push((self.col_idx[i], self.col_idx[j], scale * self.vals[i] * self.vals[j]));
                }
            }
        }
    }

    /// `AᵀA` as a symmetric CSR matrix.
    pub fn gram(&self) -> Self {
        let mut entries = Vec::new();
        self.gram_into(T::one(), &mut entries);
        Self::from_triplets(self.ncols, self.ncols, entries)
    }

    /// Multiplies each row `r` by `w[r]`.
    pub fn scale_rows(&self, w: &[T]) -> Self {
        assert_eq!(w.len(), self.nrows);
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.vals[k] *= w[r];
            }
        }
        out
    }

    /// Multiplies each column `c` by `w[c]`.
    pub fn scale_cols(&self, w: &[T]) -> Self {
        assert_eq!(w.len(), self.ncols);
        let mut out = self.clone();
        for k in 0..out.vals.len() {
            out.vals[k] *= w[out.col_idx[k]];
        }
        out
    }

    /// Relabels columns through `map` (old → new) into `new_ncols` columns, summing collisions.
    pub fn remap_columns(&self, map: &[usize], new_ncols: usize) -> Self {
        assert_eq!(map.len(), self.ncols);
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                entries.push((r, map[c], v));
            }
        }
        Self::from_triplets(self.nrows, new_ncols, entries)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut entries = Vec::new();
        for (nr, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                entries.push((nr, c, v));
            }
        }
        Self::from_triplets(rows.len(), self.ncols, entries)
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(blocks: &[&Self]) -> Self {
        let ncols = blocks.first().map_or(0, |b| b.ncols);
        let mut entries = Vec::new();
        let mut offset = 0;
        for b in blocks {
            assert_eq!(b.ncols, ncols);
            for r in 0..b.nrows {
                for (c, v) in b.row(r) {
                    entries.push((offset + r, c, v));
                }
            }
            offset += b.nrows;
        }
        Self::from_triplets(offset, ncols, entries)
    }

    pub fn row_norms(&self) -> Vec<T> {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v * v).sum::<T>().sqrt())
            .collect()
    }

    /// Squared column norms.
    pub fn col_sq_norms(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.ncols];
        for k in 0..self.vals.len() {
            out[self.col_idx[k]] += self.vals[k] * self.vals[k];
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    pub fn cast<U: Real>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            vals: self.vals.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = CsrMatrix::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 3.0), (0, 0, 1.0), (0, 0, -1.0)],
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 4.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn products_agree_with_dense() {
        let m = CsrMatrix::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 1, 2.0), (2, 0, -1.0), (2, 1, 3.0)]);
        assert_eq!(m.mul_vec(&[1.0, 2.0]), vec![1.0, 4.0, 5.0]);
        assert_eq!(m.tr_mul_vec(&[1.0, 1.0, 1.0]), vec![0.0, 5.0]);
        let g = m.gram();
        assert_eq!(g.to_dense(), vec![vec![2.0, -3.0], vec![-3.0, 13.0]]);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn remap_sums_merged_columns() {
        let m = CsrMatrix::from_triplets(1, 3, vec![(0, 0, 1.0), (0, 1, -1.0), (0, 2, 2.0)]);
        let r = m.remap_columns(&[0, 0, 1], 2);
        assert_eq!(r.row_nnz(0), 1);
        assert_eq!(r.get(0, 1), 2.0);
    }
}
