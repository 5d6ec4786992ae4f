//! Sparse matrices and a sparse Cholesky factorization for normal equations.

mod cholesky;
mod sparse;

pub use cholesky::{reverse_cuthill_mckee, FactorError, SparseCholesky};
pub use sparse::{CsrMatrix, Triplets};
