use super::dense::{gemm, DenseMatrix, MatMut, MatRef};
use super::LinalgError;

/// Square blocks laid along the diagonal of a `dim×dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagMatrix {
    dim: usize,
    blocks: Vec<(usize, DenseMatrix)>,
    orthogonal: bool,
}

impl BlockDiagMatrix {
    /// Validates that the blocks are square, contiguous and cover `[0, dim)`.
    pub fn new(
        dim: usize,
        blocks: Vec<(usize, DenseMatrix)>,
        orthogonal: bool,
    ) -> Result<Self, LinalgError> {
        let mut next = 0;
        for (idx, (off, b)) in blocks.iter().enumerate() {
            if b.rows() != b.cols() || b.rows() == 0 {
                return Err(LinalgError::InvalidBlocks(format!(
                    "block {idx} is {}x{}",
                    b.rows(),
                    b.cols()
                )));
            }
            if *off != next {
                return Err(LinalgError::InvalidBlocks(format!(
                    "block {idx} at offset {off}, expected {next}"
                )));
            }
            next += b.rows();
        }
        if next != dim {
            return Err(LinalgError::InvalidBlocks(format!(
                "blocks cover {next} of {dim}"
            )));
        }
        Ok(Self {
            dim,
            blocks,
            orthogonal,
        })
    }

    /// Builds from blocks alone, computing offsets.
    pub fn from_blocks(blocks: Vec<DenseMatrix>, orthogonal: bool) -> Result<Self, LinalgError> {
        let mut off = 0;
        let mut placed = Vec::with_capacity(blocks.len());
        for b in blocks {
            let s = b.rows();
            placed.push((off, b));
            off += s;
        }
        Self::new(off, placed, orthogonal)
    }

    pub fn identity(dim: usize) -> Self {
        let blocks = if dim == 0 {
            Vec::new()
        } else {
            vec![(0, DenseMatrix::identity(dim))]
        };
        Self {
            dim,
            blocks,
            orthogonal: true,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn blocks(&self) -> &[(usize, DenseMatrix)] {
        &self.blocks
    }

    #[inline]
    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|(_, b)| b.rows()).collect()
    }

    pub fn offsets(&self) -> Vec<usize> {
        self.blocks.iter().map(|(o, _)| *o).collect()
    }

    /// Index of the block containing diagonal position `i`.
    pub fn block_of(&self, i: usize) -> Option<usize> {
        if i >= self.dim {
            return None;
        }
        let pos = self.blocks.partition_point(|(o, _)| *o <= i);
        Some(pos - 1)
    }

    /// Worst `‖BᵀB − I‖_max` over blocks.
    pub fn orthogonality_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(_, b)| b.orthogonality_defect())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.dim, self.dim);
        for (off, b) in &self.blocks {
            out.set_block(*off, *off, b);
        }
        out
    }

    /// Blockwise transpose; for orthogonal blocks this is the inverse.
    pub fn transpose(&self) -> Self {
        Self {
            dim: self.dim,
            blocks: self.blocks.iter().map(|(o, b)| (*o, b.transpose())).collect(),
            orthogonal: self.orthogonal,
        }
    }

    /// Rows `[start, end)` of the dense form, as a `(end−start)×dim` matrix.
    pub fn dense_rows(&self, start: usize, end: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(end - start, self.dim);
        for (off, b) in &self.blocks {
            let s = b.rows();
            let lo = start.max(*off);
            let hi = end.min(off + s);
            for i in lo..hi {
                out.row_mut(i - start)[*off..off + s].copy_from_slice(b.row(i - off));
            }
        }
        out
    }

    pub fn into_blocks(self) -> Vec<(usize, DenseMatrix)> {
        self.blocks
    }
}

/// `P·X` computed block by block, never forming `P` densely.
pub fn blockdiag_mul_left(p: &BlockDiagMatrix, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if p.dim != x.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "blockdiag_mul_left",
            left: (p.dim, p.dim),
            right: x.shape(),
        });
    }
    let cols = x.cols();
    let mut out = DenseMatrix::zeros(x.rows(), cols);
    for (off, b) in &p.blocks {
        let s = b.rows();
        if b.max_abs() == 0.0 {
            continue;
        }
        gemm(
            1.0,
            MatRef::full(b),
            MatRef::sub(x, *off, 0, s, cols),
            0.0,
            MatMut::sub(&mut out, *off, 0, s, cols),
        );
    }
    Ok(out)
}

/// `X·Q` computed block by block.
pub fn blockdiag_mul_right(x: &DenseMatrix, q: &BlockDiagMatrix) -> Result<DenseMatrix, LinalgError> {
    if q.dim != x.cols() {
        return Err(LinalgError::DimensionMismatch {
            op: "blockdiag_mul_right",
            left: x.shape(),
            right: (q.dim, q.dim),
        });
    }
    let rows = x.rows();
    let mut out = DenseMatrix::zeros(rows, x.cols());
    for (off, b) in &q.blocks {
        let s = b.rows();
        if b.max_abs() == 0.0 {
            continue;
        }
        gemm(
            1.0,
            MatRef::sub(x, 0, *off, rows, s),
            MatRef::full(b),
            0.0,
            MatMut::sub(&mut out, 0, *off, rows, s),
        );
    }
    Ok(out)
}
