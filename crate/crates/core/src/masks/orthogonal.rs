use super::{MaskError, SeededGaussianStream};
use crate::linalg::{gram_schmidt_qr, BlockDiagMatrix, DenseMatrix, LinalgError};

/// Resamples allowed after the first degenerate draw.
pub(crate) const MAX_RESAMPLES: usize = 3;

/// Orthogonal factor of a Gaussian `n×n` draw.
///
/// Consumes `n²` draws per attempt, filling row-major.
pub fn random_orthogonal(n: usize, stream: &mut SeededGaussianStream) -> Result<DenseMatrix, MaskError> {
    if n == 0 {
        return Err(MaskError::InvalidArgument("orthogonal mask of size 0".into()));
    }
    for _attempt in 0..=MAX_RESAMPLES {
        let g = stream.matrix(n, n);
        match gram_schmidt_qr(&g) {
            Ok((q, _)) => return Ok(q),
            Err(LinalgError::RankDeficient { column, norm }) => {
                log::warn!("degenerate Gaussian draw (column {column}, pivot {norm:e}); resampling");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(MaskError::ResampleExhausted {
        attempts: MAX_RESAMPLES + 1,
    })
}

/// Block-diagonal orthogonal matrix: blocks of size `b`, the last one
/// `min(b, n − i)`, each an independent [`random_orthogonal`] draw.
pub fn efficient_orthogonal(
    n: usize,
    b: usize,
    stream: &mut SeededGaussianStream,
) -> Result<BlockDiagMatrix, MaskError> {
    if n == 0 || b == 0 {
        return Err(MaskError::InvalidArgument(format!("n={n}, b={b}")));
    }
    let mut blocks = Vec::with_capacity(n.div_ceil(b));
    let mut i = 0;
    while i < n {
        let size = b.min(n - i);
        blocks.push((i, random_orthogonal(size, stream)?));
        i += size;
    }
    Ok(BlockDiagMatrix::new(n, blocks, true)?)
}

/// The left mask, regenerable by every party from the broadcast seed.
pub fn generate_p(seed: u64, m: usize, b: usize) -> Result<BlockDiagMatrix, MaskError> {
    let mut stream = SeededGaussianStream::new(seed);
    let p = efficient_orthogonal(m, b, &mut stream)?;
    debug_assert!(p.orthogonality_defect() <= 1e-10);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_mask_is_unit_sign() {
        let mut s = SeededGaussianStream::new(42);
        let first = SeededGaussianStream::new(42).next_gaussian();
        let q = random_orthogonal(1, &mut s).unwrap();
        assert_eq!(q.get(0, 0), first.signum());
    }

    #[test]
    fn orthogonal_up_to_64() {
        let mut s = SeededGaussianStream::new(3);
        for n in 1..=64 {
            let q = random_orthogonal(n, &mut s).unwrap();
            assert!(q.orthogonality_defect() <= 1e-10, "n={n}");
        }
    }

    #[test]
    fn consumes_n_squared_draws() {
        let mut s = SeededGaussianStream::new(3);
        random_orthogonal(7, &mut s).unwrap();
        assert_eq!(s.draws(), 49);
    }

    #[test]
    fn block_layout() {
        let mut s = SeededGaussianStream::new(1);
        let p = efficient_orthogonal(5, 2, &mut s).unwrap();
        assert_eq!(p.block_sizes(), vec![2, 2, 1]);
        assert_eq!(p.offsets(), vec![0, 2, 4]);
        assert!(p.is_orthogonal());
        assert!(p.orthogonality_defect() <= 1e-10);
    }

    #[test]
    fn single_block_equals_full_draw() {
        let a = efficient_orthogonal(6, 6, &mut SeededGaussianStream::new(9)).unwrap();
        let b = random_orthogonal(6, &mut SeededGaussianStream::new(9)).unwrap();
        assert_eq!(a.blocks()[0].1, b);
        let p = generate_p(42, 4, 4).unwrap();
        let q = random_orthogonal(4, &mut SeededGaussianStream::new(42)).unwrap();
        assert_eq!(p.to_dense(), q);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_p(1, 50, 10).unwrap();
        let b = generate_p(2, 50, 10).unwrap();
        let (da, db) = (a.to_dense(), b.to_dense());
        let mut nonzero = 0;
        let mut differ = 0;
        for (x, y) in da.data().iter().zip(db.data()) {
            if *x != 0.0 || *y != 0.0 {
                nonzero += 1;
                if x != y {
                    differ += 1;
                }
            }
        }
        assert!(differ as f64 >= 0.99 * nonzero as f64);
    }

    #[test]
    fn rejects_zero_sizes() {
        let mut s = SeededGaussianStream::new(1);
        assert!(random_orthogonal(0, &mut s).is_err());
        assert!(efficient_orthogonal(3, 0, &mut s).is_err());
    }
}
