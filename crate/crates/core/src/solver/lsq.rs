use serde::Serialize;

use super::SolverError;
use crate::linalg::{CsrMatrix, FactorError, SparseCholesky};
use crate::scalar::{norm2, norm_inf, Real};

/// Smallest δ handed to the selection problem, guarding zero-residual (noise-free) data.
pub const DELTA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsqSolution<T> {
    pub xi: Vec<T>,
    /// `‖A ξ − b‖₂`.
    pub residual: T,
    /// `‖Aᵀ(A ξ − b)‖∞`.
    pub normal_residual: T,
}

pub(crate) fn residual_vec<T: Real>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> Vec<T> {
    a.mul_vec(x).into_iter().zip(b).map(|(ax, &bi)| ax - bi).collect()
}

impl From<FactorError> for SolverError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::ZeroPivot { column, null_vector } => SolverError::RankDeficient { column, null_vector },
            FactorError::NotSquare { rows, cols } => {
                SolverError::DimensionMismatch(format!("{rows}x{cols} normal matrix"))
            }
        }
    }
}

/// Normal-equation solve with refinement against the true residual `Aᵀ(b − A x)`.
pub(crate) fn normal_solve<T: Real>(a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>, SolverError> {
    let chol = SparseCholesky::factor(&a.gram())?;
    let atb = a.tr_mul_vec(b);
    let target = T::lit(1e-10) * norm_inf(&atb);
    let mut x = chol.solve(&atb);
    for _ in 0..4 {
        let r = residual_vec(a, &x, b);
        let g = a.tr_mul_vec(&r);
        if norm_inf(&g) <= target {
            break;
        }
        let dx = chol.solve(&g);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi -= d;
        }
    }
    Ok(x)
}

/// Minimizes `‖A ξ − b‖₂` through a sparse Cholesky factorization of `AᵀA`.
///
/// A rank-deficient `A` (for example, no anchor on the first pose) is reported with the
/// null direction the factorization ran into.
pub fn solve_least_squares<T: Real>(a: &CsrMatrix<T>, b: &[T]) -> Result<LsqSolution<T>, SolverError> {
    if a.nrows() != b.len() {
        return Err(SolverError::DimensionMismatch(format!(
            "A has {} rows, b has {}",
            a.nrows(),
            b.len()
        )));
    }
    let xi = normal_solve(a, b)?;
    let r = residual_vec(a, &xi, b);
    Ok(LsqSolution {
        residual: norm2(&r),
        normal_residual: norm_inf(&a.tr_mul_vec(&r)),
        xi,
    })
}

/// Radius of the residual ball: `(1 + ε)·residual_lin`, floored at [`DELTA_FLOOR`].
pub fn compute_delta<T: Real>(residual_lin: T, epsilon: T) -> Result<T, SolverError> {
    if epsilon < T::zero() || epsilon.is_nan() {
        return Err(SolverError::NegativeEpsilon(epsilon.to_f64_lossy()));
    }
    let floor = T::lit(DELTA_FLOOR);
    if residual_lin < floor {
        Ok(floor)
    } else {
        Ok((T::one() + epsilon) * residual_lin)
    }
}
