use std::path::Path;

use super::blockfile::{open_strip, read_block_iter};
use super::matrixfile::{Layout, MatrixFileReader, MatrixFileWriter};
use super::residency::MemoryTracker;
use super::StorageError;
use crate::linalg::{gemm, DenseMatrix, MatMut, MatRef};

/// Outcome of a streamed masking pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamReport {
    pub budget: usize,
    pub peak_bytes: usize,
    pub left_blocks: usize,
    pub segments_applied: usize,
}

fn budget_err(budget: usize) -> impl Fn(StorageError) -> StorageError {
    move |e| match e {
        StorageError::BudgetExceeded { requested, current, .. } => StorageError::BudgetTooSmall {
            budget,
            required: requested + current,
        },
        other => other,
    }
}

/// Computes `P·X·Qᵢ` from files, one block of `P` at a time.
///
/// Resident matrix data never exceeds `budget_bytes`: at most one block of
/// `P`, its rows of `X`, their product, one strip segment and one output
/// piece. Products run through the same kernel and in the same block order
/// as the in-memory path, so the output is bit-identical to it.
pub fn streamed_mask_apply(
    x_path: impl AsRef<Path>,
    p_path: impl AsRef<Path>,
    strip_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    budget_bytes: usize,
    out_layout: Layout,
) -> Result<StreamReport, StorageError> {
    let tracker = MemoryTracker::with_limit(budget_bytes);
    let report = streamed_mask_apply_tracked(x_path, p_path, strip_path, out_path, &tracker, out_layout)?;
    Ok(report)
}

/// [`streamed_mask_apply`] against a caller-supplied tracker.
pub fn streamed_mask_apply_tracked(
    x_path: impl AsRef<Path>,
    p_path: impl AsRef<Path>,
    strip_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    tracker: &MemoryTracker,
    out_layout: Layout,
) -> Result<StreamReport, StorageError> {
    let budget = tracker.limit().unwrap_or(usize::MAX);
    let on_budget = budget_err(budget);
    let mut x = MatrixFileReader::open(x_path.as_ref())?;
    let (m, width) = (x.rows(), x.cols());
    let mut p_iter = read_block_iter(p_path.as_ref())?;
    if p_iter.dim != m {
        return Err(StorageError::ShapeMismatch(format!(
            "left mask dim {} vs {m} data rows",
            p_iter.dim
        )));
    }
    let strip_head = open_strip(strip_path.as_ref())?;
    let n = strip_head.dim;
    if strip_head.col_end - strip_head.col_start != width {
        return Err(StorageError::ShapeMismatch(format!(
            "strip covers {} columns, data has {width}",
            strip_head.col_end - strip_head.col_start
        )));
    }
    drop(strip_head);

    let mut out = MatrixFileWriter::create(out_path.as_ref(), m, n, out_layout)?;
    let mut left_blocks = 0;
    let mut segments_applied = 0;
    while let Some(item) = p_iter.next_sized(|s| tracker.reserve_f64(s * s).map_err(&on_budget)) {
        let (off, pj, pj_res) = item?;
        let s = pj.rows();
        let x_res = tracker.reserve_f64(s * width).map_err(&on_budget)?;
        let xr = x.read_rows(off..off + s)?;
        let t_res = tracker.reserve_f64(s * width).map_err(&on_budget)?;
        let mut t = DenseMatrix::zeros(s, width);
        gemm(
            1.0,
            MatRef::full(&pj),
            MatRef::full(&xr),
            0.0,
            MatMut::full(&mut t),
        );
        drop((xr, x_res, pj, pj_res));

        let mut strip = open_strip(strip_path.as_ref())?;
        while let Some(seg) = strip.next_segment_sized(|h, w| tracker.reserve_f64(h * w).map_err(&on_budget)) {
            let (seg, seg_res) = seg?;
            let (h, w) = seg.data.shape();
            let piece_res = tracker.reserve_f64(s * w).map_err(&on_budget)?;
            let mut piece = DenseMatrix::zeros(s, w);
            gemm(
                1.0,
                MatRef::sub(&t, 0, seg.local_row_start, s, h),
                MatRef::full(&seg.data),
                0.0,
                MatMut::full(&mut piece),
            );
            out.write_block(off, seg.col_offset, &piece)?;
            drop((piece, piece_res, seg, seg_res));
            segments_applied += 1;
        }
        drop((t, t_res));
        left_blocks += 1;
    }
    out.finish()?;
    Ok(StreamReport {
        budget,
        peak_bytes: tracker.peak(),
        left_blocks,
        segments_applied,
    })
}
