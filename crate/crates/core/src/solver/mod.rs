//! Least squares, ℓ1 model selection under a residual ball and topology constraints, merge
//! thresholding, the collapsed re-solve and a brute-force ℓ0 oracle.

mod active_set;
mod classes;
mod columns;
mod lsq;
mod merge;
mod oracle;
mod selection;

use thiserror::Error;

pub use active_set::{constrained_least_squares, ConstrainedLs};
pub use columns::ColumnMap;
pub use lsq::{compute_delta, solve_least_squares, LsqSolution, DELTA_FLOOR};
pub use merge::{
    collapse_and_resolve, fit_within_ball, model_extents, threshold_equivalences, BallFit, LayoutStructure, MergeSet,
    ResolvedModel,
};
pub use oracle::{brute_force_l0, parse_equivalence_rows, L0Solution, DEFAULT_K_MAX};
pub use selection::{solve_sparse_selection, AdmmOptions, ConvexSolution, KktReport, FEAS_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    /// `null_vector` spans the missing direction in the original column order.
    #[error("least-squares system is rank deficient: null direction along columns {}", support(.null_vector))]
    RankDeficient { column: usize, null_vector: Vec<f64> },
    #[error("epsilon must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("mu must be positive, got {0}")]
    InvalidMu(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed equivalence row {row}: expected +1 and -1 on two plane columns")]
    MalformedEquivalence { row: usize },
    /// Even the least-squares point that honors `D ξ ≤ 0` leaves a residual above δ.
    #[error("infeasible: minimum residual {min_residual} under topology constraints exceeds delta {delta}")]
    Infeasible {
        delta: f64,
        min_residual: f64,
        certificate: Vec<f64>,
    },
    #[error("merge class mixes slots {a} and {b} on different axes")]
    CrossAxisMerge { a: usize, b: usize },
    #[error("merge class joins opposite-facing slots {a} and {b}")]
    OppositeFacingMerge { a: usize, b: usize },
    #[error("{k} hypotheses exceed the brute-force limit of {k_max}")]
    TooManyHypotheses { k: usize, k_max: usize },
}

fn support(v: &[f64]) -> String {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cols: Vec<String> = (0..v.len())
        .filter(|&i| v[i].abs() > 1e-6 * scale)
        .map(|i| i.to_string())
        .collect();
    if cols.len() > 12 {
        format!("[{}, … ({} columns)]", cols[..12].join(", "), cols.len())
    } else {
        format!("[{}]", cols.join(", "))
    }
}
