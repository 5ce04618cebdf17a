#![allow(dead_code)]

use fedsvd::linalg::DenseMatrix;
use nalgebra::DMatrix;

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    if refs.is_empty() {
        return DenseMatrix::zeros(0, m.ncols());
    }
    DenseMatrix::from_rows(&refs)
}

/// Thin SVD from nalgebra, sorted by decreasing singular value.
pub struct Oracle {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

pub fn oracle_svd(x: &DenseMatrix) -> Oracle {
    let svd = to_na(x).svd(true, true);
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let u = DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, order[j])]);
    let vt = DMatrix::from_fn(k, vt.ncols(), |i, j| vt[(order[i], j)]);
    Oracle {
        u: from_na(&u),
        sigma: order.iter().map(|&j| svd.singular_values[j]).collect(),
        vt: from_na(&vt),
    }
}

/// Per-column sign of `u` that best matches `reference`.
pub fn column_signs(u: &DenseMatrix, reference: &DenseMatrix) -> Vec<f64> {
    (0..u.cols().min(reference.cols()))
        .map(|j| {
            let d: f64 = (0..u.rows()).map(|i| u[(i, j)] * reference[(i, j)]).sum();
            if d < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect()
}

pub fn flip_cols(m: &DenseMatrix, signs: &[f64]) -> DenseMatrix {
    let mut out = m.slice_cols(0..signs.len());
    out.scale_cols(signs);
    out
}

pub fn flip_rows(m: &DenseMatrix, signs: &[f64]) -> DenseMatrix {
    flip_cols(&m.slice_rows(0..signs.len()).transpose(), signs).transpose()
}

pub fn rmse(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let n = a.data().len() as f64;
    (a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn reconstruct(u: &DenseMatrix, sigma: &[f64], vt: &DenseMatrix) -> DenseMatrix {
    let mut us = u.slice_cols(0..sigma.len());
    us.scale_cols(sigma);
    us.matmul(&vt.slice_rows(0..sigma.len())).unwrap()
}

/// Smallest gap between consecutive singular values, relative to the largest.
pub fn min_relative_gap(sigma: &[f64]) -> f64 {
    sigma
        .windows(2)
        .map(|w| (w[0] - w[1]) / sigma[0])
        .fold(f64::INFINITY, f64::min)
}
