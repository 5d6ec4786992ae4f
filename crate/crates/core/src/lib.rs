// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod frontend;
pub mod geometry;
pub mod graph;
pub mod linalg;
pub mod observation;
pub mod pipeline;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod union_find;

pub use scalar::Real;

/// Double-precision instantiations of the generic numerical types.
pub type Csr = linalg::CsrMatrix<f64>;
pub type System = graph::SparseSystem<f64>;
pub type Lsq = solver::LsqSolution<f64>;
pub type Selection = solver::ConvexSolution<f64>;
pub type Resolved = solver::ResolvedModel<f64>;
pub type L0 = solver::L0Solution<f64>;
