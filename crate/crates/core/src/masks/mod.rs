//! Seed-regenerable orthogonal masks, user strips of the right mask and the
//! block-diagonal recovery masks used to fetch private right singular vectors.

mod orthogonal;
mod stream;
mod strip;

pub use orthogonal::{efficient_orthogonal, generate_p, random_orthogonal};
pub use stream::SeededGaussianStream;
pub use strip::{
    generate_r, invert_r, mask_strip_transpose, split_q, strip_mul_right, BlockSparseMatrix,
    PlacedBlock, QSegment, QStrip, R_COND_LIMIT,
};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("gave up after {attempts} degenerate draws")]
    ResampleExhausted { attempts: usize },
    #[error("partition widths sum to {sum}, mask dimension is {dim}")]
    WidthMismatch { sum: usize, dim: usize },
    #[error("invalid strip: {0}")]
    InvalidStrip(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
