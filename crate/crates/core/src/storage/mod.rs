//! On-disk formats for masks and matrices, and out-of-core mask application
//! under a memory budget.

mod blockfile;
mod matrixfile;
mod residency;
mod stream;

pub use blockfile::{
    block_file_len, open_strip, read_block_iter, read_blocks, read_blocks_from, read_strip,
    read_strip_from,
    write_blocks, write_blocks_to, write_strip, write_strip_to, BlockIter, StripReader,
    BLOCK_HEADER_LEN, BLOCK_MAGIC, STRIP_MAGIC,
};
pub use matrixfile::{
    matrix_file_len, read_matrix, write_matrix, write_matrix_to, Layout, MatrixFileReader,
    MatrixFileWriter, MATRIX_HEADER_LEN, MATRIX_MAGIC,
};
pub use residency::{MemoryTracker, Reservation};
pub use stream::{streamed_mask_apply, streamed_mask_apply_tracked, StreamReport};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::masks::MaskError;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("budget of {budget} bytes is too small; {required} bytes needed")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("reservation of {requested} bytes exceeds limit {limit} ({current} in use)")]
    BudgetExceeded {
        requested: usize,
        current: usize,
        limit: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}
