mod common;

use common::*;
use fedsvd::apps::{center_rows, fed_lr, fed_lsa, fed_pca, secure_row_means};
use fedsvd::linalg::DenseMatrix;
use fedsvd::masks::SeededGaussianStream;
use fedsvd::protocol::{run_fedsvd, SessionConfig};
use fedsvd::secagg::Codec;
use nalgebra::{DMatrix, DVector};

fn gaussian(seed: u64, m: usize, n: usize) -> DenseMatrix {
    SeededGaussianStream::new(seed).matrix(m, n)
}

fn split(x: &DenseMatrix, widths: &[usize]) -> Vec<DenseMatrix> {
    let mut c = 0;
    widths
        .iter()
        .map(|&w| {
            c += w;
            x.slice_cols(c - w..c)
        })
        .collect()
}

/// `‖A·Aᵀ − B·Bᵀ‖₂` through an independent dense SVD.
fn projection_distance(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let (a, b) = (to_na(a), to_na(b));
    let d: DMatrix<f64> = &a * a.transpose() - &b * b.transpose();
    d.singular_values().max()
}

/// Matrix with singular values `sigma` and seeded orthonormal factors.
fn with_spectrum(seed: u64, m: usize, n: usize, sigma: &[f64]) -> DenseMatrix {
    let u = to_na(&gaussian(seed, m, m)).qr().q();
    let v = to_na(&gaussian(seed + 1, n, n)).qr().q();
    let mut s = DMatrix::zeros(m, n);
    for (i, &x) in sigma.iter().enumerate() {
        s[(i, i)] = x;
    }
    from_na(&(u * s * v.transpose()))
}

#[test]
fn full_rank_pca_preserves_norms() {
    let x = gaussian(1, 6, 14);
    let widths = [7, 7];
    let cfg = SessionConfig::new(6, widths.to_vec(), 4);
    let parts = split(&x, &widths);
    for res in fed_pca(&cfg, &parts, 6).unwrap() {
        let a = res.projection.frobenius_norm();
        let b = parts[res.index].frobenius_norm();
        assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
        assert_eq!(res.projection.shape(), (6, 7));
    }
}

#[test]
fn rank_one_pca_captures_all_variance() {
    let u = SeededGaussianStream::new(2).vector(5);
    let v = SeededGaussianStream::new(3).vector(12);
    let x = DenseMatrix::column_vector(&u).matmul(&DenseMatrix::new(1, 12, v).unwrap()).unwrap();
    let cfg = SessionConfig::new(5, vec![5, 7], 2);
    let parts = split(&x, &[5, 7]);
    let res = fed_pca(&cfg, &parts, 1).unwrap();
    let captured: f64 = res.iter().map(|r| r.projection.frobenius_norm().powi(2)).sum();
    let total = x.frobenius_norm().powi(2);
    assert!(captured >= (1.0 - 1e-9) * total);
}

#[test]
fn pca_subspace_matches_centralized() {
    let x = with_spectrum(4, 20, 16, &[10.0, 8.0, 6.0, 5.0, 4.0, 1.0, 0.5, 0.25]);
    let cfg = SessionConfig::new(20, vec![8, 8], 4);
    let res = fed_pca(&cfg, &split(&x, &[8, 8]), 5).unwrap();
    let oracle = oracle_svd(&x).u.slice_cols(0..5);
    for r in &res {
        assert!(projection_distance(&r.components, &oracle) <= 1e-8);
    }
}

#[test]
fn pca_with_secure_centering_matches_centered_oracle() {
    let mut x = gaussian(5, 8, 30);
    for r in 0..8 {
        x.row_mut(r).iter_mut().for_each(|v| *v += r as f64);
    }
    let parts = split(&x, &[12, 18]);
    let means = secure_row_means(&parts, Codec::default(), 1).unwrap();
    let centered: Vec<DenseMatrix> = parts.iter().map(|p| center_rows(p, &means)).collect();
    let cfg = SessionConfig::new(8, vec![12, 18], 4);
    let res = fed_pca(&cfg, &centered, 3).unwrap();
    let full = DenseMatrix::hstack(&[&centered[0], &centered[1]]).unwrap();
    let o = oracle_svd(&full);
    assert!(min_relative_gap(&o.sigma[..4]) > 1e-6);
    assert!(projection_distance(&res[0].components, &o.u.slice_cols(0..3)) <= 1e-8);
}

fn normal_equations(x: &DenseMatrix, y: &[f64]) -> DVector<f64> {
    let xa = to_na(x);
    let ya = DVector::from_column_slice(y);
    (xa.transpose() * &xa).lu().solve(&(xa.transpose() * ya)).unwrap()
}

/// Plain gradient descent on the mean squared error, step `1/L`.
fn gradient_descent_mse(x: &DenseMatrix, y: &[f64], iters: usize) -> f64 {
    let xa = to_na(x);
    let ya = DVector::from_column_slice(y);
    let lip = (xa.transpose() * &xa).symmetric_eigenvalues().max();
    let mut w = DVector::zeros(x.cols());
    for _ in 0..iters {
        let g = xa.transpose() * (&xa * &w - &ya);
        w -= g / lip;
    }
    (&xa * &w - &ya).norm_squared() / x.rows() as f64
}

#[test]
fn consistent_system_has_zero_residual() {
    let x = gaussian(6, 12, 6);
    let w = SeededGaussianStream::new(7).vector(6);
    let y = x.matvec(&w).unwrap();
    let cfg = SessionConfig::new(12, vec![3, 3], 2);
    let res = fed_lr(&cfg, &split(&x, &[3, 3]), &y, 0, false).unwrap();
    let y2: f64 = y.iter().map(|v| v * v).sum();
    assert!(res.mse <= 1e-16 * y2, "{}", res.mse);
}

#[test]
fn overdetermined_regression_matches_oracles() {
    let x = gaussian(8, 50, 8);
    let y = SeededGaussianStream::new(9).vector(50);
    let cfg = SessionConfig::new(50, vec![4, 4], 3);
    let res = fed_lr(&cfg, &split(&x, &[4, 4]), &y, 1, false).unwrap();
    let w: Vec<f64> = res.weights.concat();
    let want = normal_equations(&x, &y);
    let err = (DVector::from_vec(w) - &want).norm() / want.norm();
    assert!(err <= 1e-8, "{err}");
    let gd = gradient_descent_mse(&x, &y, 10_000);
    assert!(res.mse <= gd * (1.0 + 1e-12), "{} > {gd}", res.mse);
}

#[test]
fn intercept_is_fitted_by_the_label_holder() {
    let x = gaussian(10, 40, 5);
    let truth = [1.0, -2.0, 0.5, 3.0, -1.0];
    let y: Vec<f64> = x.matvec(&truth).unwrap().iter().map(|v| v + 7.0).collect();
    let cfg = SessionConfig::new(40, vec![2, 3], 2);
    let res = fed_lr(&cfg, &split(&x, &[2, 3]), &y, 1, true).unwrap();
    assert!((res.intercept.unwrap() - 7.0).abs() < 1e-9);
    assert_eq!(res.weights[1].len(), 3);
    for (a, b) in res.weights.concat().iter().zip(truth) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(res.mse < 1e-18);
}

#[test]
fn full_rank_lsa_equals_plain_session() {
    let x = gaussian(11, 7, 9);
    let cfg = SessionConfig::new(7, vec![4, 5], 3);
    let parts = split(&x, &[4, 5]);
    let lsa = fed_lsa(&cfg, &parts, 7).unwrap();
    let plain = run_fedsvd(&cfg, &parts, None).unwrap();
    assert_eq!(Some(&lsa.u), plain.users[0].u.as_ref());
    assert_eq!(lsa.sigma, plain.users[0].sigma);
    for (a, b) in lsa.vt.iter().zip(&plain.users) {
        assert_eq!(Some(a), b.vt.as_ref());
    }
}

#[test]
fn rank_two_lsa_reconstructs() {
    let x = with_spectrum(12, 10, 8, &[3.0, 2.0]);
    let cfg = SessionConfig::new(10, vec![3, 5], 4);
    let parts = split(&x, &[3, 5]);
    let lsa = fed_lsa(&cfg, &parts, 2).unwrap();
    for (i, vt) in lsa.vt.iter().enumerate() {
        let rec = reconstruct(&lsa.u, &lsa.sigma, vt);
        assert!(rec.max_abs_diff(&parts[i]) <= 1e-8);
    }
}

#[test]
fn truncated_lsa_matches_centralized_subspaces() {
    let x = gaussian(13, 30, 24);
    let o = oracle_svd(&x);
    assert!(o.sigma[9] - o.sigma[10] > 1e-6 * o.sigma[0]);
    let cfg = SessionConfig::new(30, vec![10, 14], 8);
    let parts = split(&x, &[10, 14]);
    let lsa = fed_lsa(&cfg, &parts, 10).unwrap();
    assert!(projection_distance(&lsa.u, &o.u.slice_cols(0..10)) <= 1e-8);
    let v = DenseMatrix::hstack(&[&lsa.vt[0], &lsa.vt[1]]).unwrap().transpose();
    assert!(projection_distance(&v, &o.vt.slice_rows(0..10).transpose()) <= 1e-8);
}
