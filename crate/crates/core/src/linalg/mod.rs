//! Deterministic dense linear algebra: matrices, Gram-Schmidt QR, a one-sided
//! Jacobi SVD, block-diagonal products and small dense inverses.

mod blockdiag;
mod dense;
mod lu;
mod qr;
mod svd;

pub use blockdiag::{blockdiag_mul_left, blockdiag_mul_right, BlockDiagMatrix};
pub use dense::{axpy, dot, gemm, norm2, DenseMatrix, MatMut, MatRef};
pub use lu::{cond_1norm, invert, LuFactor};
pub use qr::gram_schmidt_qr;
pub use svd::{pinv_apply, svd_dense, svd_thin, SvdResult};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("expected {expected} entries, got {got}")]
    InvalidData { expected: usize, got: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("rank deficient: pivot norm {norm:e} at column {column}")]
    RankDeficient { column: usize, norm: f64 },
    #[error("no convergence after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("singular block {block}: pivot {pivot:e}")]
    SingularBlock { block: usize, pivot: f64 },
    #[error("invalid block layout: {0}")]
    InvalidBlocks(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
