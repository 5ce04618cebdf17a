use std::ops::Range;

use super::orthogonal::MAX_RESAMPLES;
use super::{MaskError, SeededGaussianStream};
use crate::linalg::{cond_1norm, gemm, invert, BlockDiagMatrix, DenseMatrix, LinalgError, MatMut, MatRef};

/// Recovery-mask blocks with a larger condition estimate are redrawn.
pub const R_COND_LIMIT: f64 = 1e8;

/// The nonzero rectangle of a user's strip that intersects one diagonal
/// block of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QSegment {
    /// Index of the intersected diagonal block of `Q`.
    pub block_index: usize,
    /// First global column of that block.
    pub col_offset: usize,
    /// First row of this segment within the strip.
    pub local_row_start: usize,
    /// `h×s` slice of the block.
    pub data: DenseMatrix,
}

impl QSegment {
    pub fn height(&self) -> usize {
        self.data.rows()
    }

    pub fn width(&self) -> usize {
        self.data.cols()
    }
}

/// Rows `col_range` of `Q`, i.e. the slice that multiplies one user's columns.
#[derive(Debug, Clone, PartialEq)]
pub struct QStrip {
    pub owner: usize,
    pub col_range: Range<usize>,
    /// Dimension of `Q`.
    pub dim: usize,
    pub segments: Vec<QSegment>,
}

impl QStrip {
    pub fn width(&self) -> usize {
        self.col_range.len()
    }

    /// `nᵢ×n` dense form.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.width(), self.dim);
        for seg in &self.segments {
            out.set_block(seg.local_row_start, seg.col_offset, &seg.data);
        }
        out
    }

    /// Number of stored reals; zeros outside the segments are never sent.
    pub fn stored_len(&self) -> usize {
        self.segments.iter().map(|s| s.data.rows() * s.data.cols()).sum()
    }

    /// Checks that segment heights tile the strip and stay inside `Q`.
    pub fn validate(&self) -> Result<(), MaskError> {
        let mut next = 0;
        for seg in &self.segments {
            if seg.local_row_start != next || seg.col_offset + seg.width() > self.dim {
                return Err(MaskError::InvalidStrip(format!(
                    "segment for block {} misplaced",
                    seg.block_index
                )));
            }
            next += seg.height();
        }
        if next != self.width() {
            return Err(MaskError::InvalidStrip(format!(
                "segment heights cover {next} of {}",
                self.width()
            )));
        }
        Ok(())
    }
}

/// Splits `Q` into per-user horizontal strips, keeping only nonzero segments.
pub fn split_q(q: &BlockDiagMatrix, widths: &[usize]) -> Result<Vec<QStrip>, MaskError> {
    let total: usize = widths.iter().sum();
    if total != q.dim() {
        return Err(MaskError::WidthMismatch {
            sum: total,
            dim: q.dim(),
        });
    }
    let mut strips = Vec::with_capacity(widths.len());
    let mut start = 0;
    for (owner, &w) in widths.iter().enumerate() {
        let end = start + w;
        let mut segments = Vec::new();
        for (idx, (off, block)) in q.blocks().iter().enumerate() {
            let s = block.rows();
            let lo = start.max(*off);
            let hi = end.min(off + s);
            if lo < hi {
                segments.push(QSegment {
                    block_index: idx,
                    col_offset: *off,
                    local_row_start: lo - start,
                    data: block.slice_rows(lo - off..hi - off),
                });
            }
        }
        strips.push(QStrip {
            owner,
            col_range: start..end,
            dim: q.dim(),
            segments,
        });
        start = end;
    }
    Ok(strips)
}

/// `X·Qᵢ` for `X` with `nᵢ` columns, producing `rows×n` without densifying `Qᵢ`.
pub fn strip_mul_right(x: &DenseMatrix, strip: &QStrip) -> Result<DenseMatrix, MaskError> {
    if x.cols() != strip.width() {
        return Err(LinalgError::DimensionMismatch {
            op: "strip_mul_right",
            left: x.shape(),
            right: (strip.width(), strip.dim),
        }
        .into());
    }
    let rows = x.rows();
    let mut out = DenseMatrix::zeros(rows, strip.dim);
    for seg in &strip.segments {
        gemm(
            1.0,
            MatRef::sub(x, 0, seg.local_row_start, rows, seg.height()),
            MatRef::full(&seg.data),
            0.0,
            MatMut::sub(&mut out, 0, seg.col_offset, rows, seg.width()),
        );
    }
    Ok(out)
}

/// A dense block placed at `(row, col)` inside a larger sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedBlock {
    pub row: usize,
    pub col: usize,
    pub data: DenseMatrix,
}

/// Matrix stored as non-overlapping dense rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub blocks: Vec<PlacedBlock>,
}

impl BlockSparseMatrix {
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for b in &self.blocks {
            out.set_block(b.row, b.col, &b.data);
        }
        out
    }

    pub fn stored_len(&self) -> usize {
        self.blocks.iter().map(|b| b.data.rows() * b.data.cols()).sum()
    }

    /// `A·self` for dense `A` with `self.rows` columns.
    pub fn left_mul(&self, a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if a.cols() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "block_sparse_left_mul",
                left: a.shape(),
                right: (self.rows, self.cols),
            });
        }
        let r = a.rows();
        let mut out = DenseMatrix::zeros(r, self.cols);
        for b in &self.blocks {
            if b.row + b.data.rows() > self.rows || b.col + b.data.cols() > self.cols {
                return Err(LinalgError::InvalidBlocks("placed block out of range".into()));
            }
            gemm(
                1.0,
                MatRef::sub(a, 0, b.row, r, b.data.rows()),
                MatRef::full(&b.data),
                1.0,
                MatMut::sub(&mut out, 0, b.col, r, b.data.cols()),
            );
        }
        Ok(out)
    }
}

/// Recovery mask for a strip: one Gaussian block per segment, sized by the
/// segment height, so that `Qᵢᵀ·Rᵢ` keeps the block pattern of `Qᵢᵀ`.
pub fn generate_r(strip: &QStrip, stream: &mut SeededGaussianStream) -> Result<BlockDiagMatrix, MaskError> {
    strip.validate()?;
    let mut blocks = Vec::with_capacity(strip.segments.len());
    for seg in &strip.segments {
        let h = seg.height();
        let mut accepted = None;
        for _attempt in 0..=MAX_RESAMPLES {
            let g = stream.matrix(h, h);
            let c = cond_1norm(&g);
            if c <= R_COND_LIMIT {
                accepted = Some(g);
                break;
            }
            log::warn!("recovery block of size {h} has condition {c:e}; resampling");
        }
        let g = accepted.ok_or(MaskError::ResampleExhausted {
            attempts: MAX_RESAMPLES + 1,
        })?;
        blocks.push((seg.local_row_start, g));
    }
    Ok(BlockDiagMatrix::new(strip.width(), blocks, false)?)
}

/// Blockwise inverse.
pub fn invert_r(r: &BlockDiagMatrix) -> Result<BlockDiagMatrix, MaskError> {
    let mut blocks = Vec::with_capacity(r.blocks().len());
    for (idx, (off, b)) in r.blocks().iter().enumerate() {
        let inv = invert(b).map_err(|e| match e {
            LinalgError::SingularBlock { pivot, .. } => LinalgError::SingularBlock { block: idx, pivot },
            other => other,
        })?;
        blocks.push((*off, inv));
    }
    Ok(BlockDiagMatrix::new(r.dim(), blocks, false)?)
}

/// `Qᵢᵀ·Rᵢ` as an `n×nᵢ` block-sparse matrix.
pub fn mask_strip_transpose(strip: &QStrip, r: &BlockDiagMatrix) -> Result<BlockSparseMatrix, MaskError> {
    if r.dim() != strip.width() || r.blocks().len() != strip.segments.len() {
        return Err(MaskError::InvalidStrip("recovery mask does not match strip".into()));
    }
    let mut blocks = Vec::with_capacity(strip.segments.len());
    for (seg, (off, rb)) in strip.segments.iter().zip(r.blocks()) {
        if *off != seg.local_row_start || rb.rows() != seg.height() {
            return Err(MaskError::InvalidStrip("recovery block misaligned".into()));
        }
        let mut data = DenseMatrix::zeros(seg.width(), seg.height());
        gemm(
            1.0,
            MatRef::full(&seg.data).t(),
            MatRef::full(rb),
            0.0,
            MatMut::full(&mut data),
        );
        blocks.push(PlacedBlock {
            row: seg.col_offset,
            col: seg.local_row_start,
            data,
        });
    }
    Ok(BlockSparseMatrix {
        rows: strip.dim,
        cols: strip.width(),
        blocks,
    })
}
