use super::dense::{dot, DenseMatrix};
use super::LinalgError;

/// Pivot norms below this are treated as a degenerate draw.
const PIVOT_FLOOR: f64 = 1e-12;

/// Modified Gram-Schmidt QR with one full reorthogonalization pass.
///
/// Accepts square or tall input. `R` has a nonnegative diagonal. The loop is
/// strictly sequential, so identical input bits give identical output bits.
pub fn gram_schmidt_qr(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix), LinalgError> {
    let (m, n) = a.shape();
    if m < n {
        return Err(LinalgError::DimensionMismatch {
            op: "gram_schmidt_qr",
            left: (m, n),
            right: (n, n),
        });
    }
    // Columns stored contiguously.
    let at = a.transpose();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut v = at.row(j).to_vec();
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= c * qk;
                }
                r[(i, j)] += c;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if !(norm >= PIVOT_FLOOR) {
            return Err(LinalgError::RankDeficient { column: j, norm });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        r[(j, j)] = norm;
        q.push(v);
    }
    let mut qm = DenseMatrix::zeros(m, n);
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            qm[(i, j)] = v;
        }
    }
    Ok((qm, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::SeededGaussianStream;

    /// Classical Gram-Schmidt written out directly, no reorthogonalization.
    fn classical_gs(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let n = a.cols();
        let m = a.rows();
        let mut q = DenseMatrix::zeros(m, n);
        let mut r = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let aj = a.column(j);
            let mut v = aj.clone();
            for i in 0..j {
                let qi = q.column(i);
                let c: f64 = qi.iter().zip(&aj).map(|(x, y)| x * y).sum();
                r[(i, j)] = c;
                for k in 0..m {
                    v[k] -= c * qi[k];
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            r[(j, j)] = norm;
            for k in 0..m {
                q[(k, j)] = v[k] / norm;
            }
        }
        (q, r)
    }

    #[test]
    fn identity_input() {
        let (q, r) = gram_schmidt_qr(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(q, DenseMatrix::identity(3));
        assert_eq!(r, DenseMatrix::identity(3));
    }

    #[test]
    fn scaled_orthogonal_columns() {
        let a = DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let (q, r) = gram_schmidt_qr(&a).unwrap();
        assert_eq!(q, DenseMatrix::identity(2));
        assert_eq!(r, DenseMatrix::from_diag(&[2.0, 3.0]));
    }

    #[test]
    fn upper_triangular_two_by_two() {
        let a = DenseMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let (q, r) = gram_schmidt_qr(&a).unwrap();
        let (qo, ro) = classical_gs(&a);
        assert_eq!(q, DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert_eq!(r, DenseMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
        assert!(q.max_abs_diff(&qo) < 1e-15);
        assert!(r.max_abs_diff(&ro) < 1e-15);
    }

    #[test]
    fn random_matches_classical_oracle() {
        let mut s = SeededGaussianStream::new(11);
        for n in [1usize, 2, 5, 17, 40] {
            let a = s.matrix(n, n);
            let (q, r) = gram_schmidt_qr(&a).unwrap();
            assert!(q.orthogonality_defect() <= 1e-10);
            let rec = q.matmul(&r).unwrap();
            assert!(rec.max_abs_diff(&a) <= 1e-9 * a.max_abs());
            let (qo, _) = classical_gs(&a);
            assert!(q.max_abs_diff(&qo) < 1e-8, "n={n}");
            for i in 0..n {
                assert!(r[(i, i)] > 0.0);
                for j in 0..i {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn idempotent_on_orthogonal_input() {
        let mut s = SeededGaussianStream::new(5);
        let (q1, _) = gram_schmidt_qr(&s.matrix(12, 12)).unwrap();
        let (q2, r2) = gram_schmidt_qr(&q1).unwrap();
        assert!(q2.max_abs_diff(&q1) <= 1e-10);
        assert!(r2.max_abs_diff(&DenseMatrix::identity(12)) <= 1e-10);
    }

    #[test]
    fn rank_deficient_reported() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(
            gram_schmidt_qr(&a),
            Err(LinalgError::RankDeficient { column: 1, .. })
        ));
        let z = DenseMatrix::zeros(2, 2);
        assert!(matches!(
            gram_schmidt_qr(&z),
            Err(LinalgError::RankDeficient { column: 0, .. })
        ));
    }

    #[test]
    fn deterministic_bits() {
        let a = SeededGaussianStream::new(9).matrix(30, 30);
        let (q1, r1) = gram_schmidt_qr(&a).unwrap();
        let (q2, r2) = gram_schmidt_qr(&a.clone()).unwrap();
        assert!(q1.data().iter().zip(q2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(r1.data().iter().zip(r2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
