use super::dense::{axpy, dot, gemm, DenseMatrix, MatMut, MatRef};
use super::LinalgError;

const MAX_SWEEPS: usize = 60;
const ROTATION_TOL_FLOOR: f64 = 1e-14;

/// `U·diag(sigma)·Vt`, possibly with more columns in `u` or rows in `vt` than
/// singular values (full factorization).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

impl SvdResult {
    /// Number of singular values, `min(m, n)`.
    pub fn rank_capacity(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps only the leading `r` triplets.
    pub fn truncate(&self, r: usize) -> SvdResult {
        let r = r.min(self.sigma.len());
        SvdResult {
            u: self.u.slice_cols(0..r),
            sigma: self.sigma[..r].to_vec(),
            vt: self.vt.slice_rows(0..r),
        }
    }

    /// `U_k·diag(sigma)·Vt_k` over the leading `k = sigma.len()` triplets.
    pub fn reconstruct(&self) -> DenseMatrix {
        let k = self.sigma.len();
        let mut us = self.u.slice_cols(0..k);
        us.scale_cols(&self.sigma);
        us.matmul(&self.vt.slice_rows(0..k)).expect("consistent svd shapes")
    }
}

/// Full SVD: `U` is `m×m`, `Vt` is `n×n`, `sigma` has `min(m, n)` entries.
pub fn svd_dense(a: &DenseMatrix) -> Result<SvdResult, LinalgError> {
    svd_impl(a, true)
}

/// Thin SVD: `U` is `m×k`, `Vt` is `k×n` with `k = min(m, n)`.
pub fn svd_thin(a: &DenseMatrix) -> Result<SvdResult, LinalgError> {
    svd_impl(a, false)
}

fn svd_impl(a: &DenseMatrix, full: bool) -> Result<SvdResult, LinalgError> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(LinalgError::InvalidArgument("svd of an empty matrix".into()));
    }
    if let Some(pos) = a.data().iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite {
            row: pos / n,
            col: pos % n,
        });
    }
    let transposed = m < n;
    // Columns of the tall operand.
    let cols: Vec<Vec<f64>> = if transposed {
        (0..m).map(|i| a.row(i).to_vec()).collect()
    } else {
        let at = a.transpose();
        (0..n).map(|j| at.row(j).to_vec()).collect()
    };
    let tall = tall_svd(cols, full)?;
    let k = tall.sigma.len();
    let (mut u, mut vt) = if transposed {
        // X = Aᵀ = V_A Σ U_Aᵀ
        (cols_to_matrix(&tall.v), rows_to_matrix(&tall.u))
    } else {
        (cols_to_matrix(&tall.u), rows_to_matrix(&tall.v))
    };
    apply_sign_convention(&mut u, &mut vt, k);
    Ok(SvdResult {
        u,
        sigma: tall.sigma,
        vt,
    })
}

struct TallSvd {
    /// Left vectors as columns (length M); N of them, or M when full.
    u: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    /// Right vectors as columns (length N).
    v: Vec<Vec<f64>>,
}

/// Householder reflectors of one panel in compact WY form:
/// `H₀·H₁⋯ = I − V·T·Vᵀ`, with `V` stored by rows.
struct Panel {
    start: usize,
    /// `nb×(M−start)`; row `i` is reflector `i`, zero before column `i`.
    v: DenseMatrix,
    /// `nb×nb` upper triangular.
    t: DenseMatrix,
}

const PANEL: usize = 32;

/// SVD of an `M×N` matrix given by its columns, `M ≥ N`.
///
/// Blocked Householder QR first, then one-sided Jacobi on the triangular factor.
fn tall_svd(cols: Vec<Vec<f64>>, full: bool) -> Result<TallSvd, LinalgError> {
    let n = cols.len();
    let m = cols[0].len();
    debug_assert!(m >= n);

    // Row j holds column j of the operand.
    let mut at = DenseMatrix::from_raw(n, m, cols.concat());
    drop(cols);
    let mut r_diag = vec![0.0; n];
    let mut panels = Vec::with_capacity(n.div_ceil(PANEL));
    for k0 in (0..n).step_by(PANEL) {
        let k1 = (k0 + PANEL).min(n);
        let panel = factor_panel(&mut at, k0, k1, &mut r_diag);
        if k1 < n {
            apply_panel_t(&panel, &mut at, k1, n - k1);
        }
        panels.push(panel);
    }

    // Columns of the N×N upper triangular factor.
    let mut w: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut c = vec![0.0; n];
            c[..k].copy_from_slice(&at.row(k)[..k]);
            c[k] = r_diag[k];
            c
        })
        .collect();
    drop(at);

    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut c = vec![0.0; n];
            c[k] = 1.0;
            c
        })
        .collect();

    jacobi_sweeps(&mut w, &mut v)?;

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let v: Vec<Vec<f64>> = order.iter().map(|&i| std::mem::take(&mut v[i])).collect();

    let s1 = sigma[0];
    let thresh = n as f64 * f64::EPSILON * s1;
    let mut wn: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        let s = norms[i];
        if s > thresh && s > 0.0 {
            let mut c = std::mem::take(&mut w[i]);
            c.iter_mut().for_each(|x| *x /= s);
            wn.push(c);
        } else {
            deficient.push(slot);
            wn.push(Vec::new());
        }
    }
    complete_basis(&mut wn, &deficient, n);

    // Left vectors: the reflectors applied to [W; 0] (and an identity tail
    // when full), stored by rows.
    let width = if full { m } else { n };
    let mut ut = DenseMatrix::zeros(width, m);
    for j in 0..width {
        let row = ut.row_mut(j);
        if j < n {
            row[..n].copy_from_slice(&wn[j]);
        } else {
            row[j] = 1.0;
        }
    }
    for panel in panels.iter().rev() {
        apply_panel(panel, &mut ut);
    }
    let u = (0..width).map(|j| ut.row(j).to_vec()).collect();
    Ok(TallSvd { u, sigma, v })
}

/// Unblocked QR of columns `k0..k1` (rows of `at`), returning their
/// reflectors in compact WY form.
fn factor_panel(at: &mut DenseMatrix, k0: usize, k1: usize, r_diag: &mut [f64]) -> Panel {
    let m = at.cols();
    let (nb, len) = (k1 - k0, m - k0);
    let mut v = DenseMatrix::zeros(nb, len);
    let mut tau = vec![0.0; nb];
    for j in k0..k1 {
        let i = j - k0;
        let x = &at.row(j)[j..];
        let alpha = dot(x, x).sqrt();
        if alpha == 0.0 {
            continue;
        }
        let s = if x[0] >= 0.0 { -alpha } else { alpha };
        let mut h = x.to_vec();
        h[0] -= s;
        let vtv = dot(&h, &h);
        r_diag[j] = s;
        for c in j + 1..k1 {
            let seg = &mut at.row_mut(c)[j..];
            let f = 2.0 * dot(&h, seg) / vtv;
            axpy(-f, &h, seg);
        }
        tau[i] = 2.0 / vtv;
        v.row_mut(i)[i..].copy_from_slice(&h);
    }
    let mut t = DenseMatrix::zeros(nb, nb);
    for i in 0..nb {
        t[(i, i)] = tau[i];
        if i == 0 || tau[i] == 0.0 {
            continue;
        }
        let z: Vec<f64> = (0..i).map(|p| dot(&v.row(p)[i..], &v.row(i)[i..])).collect();
        for p in 0..i {
            let acc: f64 = (p..i).map(|q| t[(p, q)] * z[q]).sum();
            t[(p, i)] = -tau[i] * acc;
        }
    }
    Panel { start: k0, v, t }
}

/// `C ← (I − V·Tᵀ·Vᵀ)·C` on the operand columns `c0..c0+count`, rows
/// `start..` of the tall matrix.
fn apply_panel_t(panel: &Panel, at: &mut DenseMatrix, c0: usize, count: usize) {
    let (nb, len) = panel.v.shape();
    let mut w = DenseMatrix::zeros(nb, count);
    gemm(
        1.0,
        MatRef::full(&panel.v),
        MatRef::sub(at, c0, panel.start, count, len).t(),
        0.0,
        MatMut::full(&mut w),
    );
    let mut tw = DenseMatrix::zeros(nb, count);
    gemm(1.0, MatRef::full(&panel.t).t(), MatRef::full(&w), 0.0, MatMut::full(&mut tw));
    gemm(
        -1.0,
        MatRef::full(&tw).t(),
        MatRef::full(&panel.v),
        1.0,
        MatMut::sub(at, c0, panel.start, count, len),
    );
}

/// `U ← (I − V·T·Vᵀ)·U` on rows `start..` of the matrix whose columns are
/// the rows of `ut`.
fn apply_panel(panel: &Panel, ut: &mut DenseMatrix) {
    let (nb, len) = panel.v.shape();
    let width = ut.rows();
    let mut w = DenseMatrix::zeros(nb, width);
    gemm(
        1.0,
        MatRef::full(&panel.v),
        MatRef::sub(ut, 0, panel.start, width, len).t(),
        0.0,
        MatMut::full(&mut w),
    );
    let mut tw = DenseMatrix::zeros(nb, width);
    gemm(1.0, MatRef::full(&panel.t), MatRef::full(&w), 0.0, MatMut::full(&mut tw));
    gemm(
        -1.0,
        MatRef::full(&tw).t(),
        MatRef::full(&panel.v),
        1.0,
        MatMut::sub(ut, 0, panel.start, width, len),
    );
}

/// Cyclic one-sided Jacobi on columns `w`, accumulating rotations into `v`.
fn jacobi_sweeps(w: &mut [Vec<f64>], v: &mut [Vec<f64>]) -> Result<(), LinalgError> {
    let n = w.len();
    let tol = ROTATION_TOL_FLOOR.max(n as f64 * f64::EPSILON);
    let mut residual = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                if rel <= tol {
                    continue;
                }
                residual = residual.max(rel);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(w, p, q, c, s);
                rotate(v, p, q, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(LinalgError::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (a, b) = (&mut lo[p], &mut hi[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the empty slots of `w` with unit vectors orthogonal to the rest,
/// picking the standard basis vector with the largest residual each time.
fn complete_basis(w: &mut [Vec<f64>], slots: &[usize], n: usize) {
    for &slot in slots {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for t in 0..n {
            let mut e = vec![0.0; n];
            e[t] = 1.0;
            for _pass in 0..2 {
                for (i, c) in w.iter().enumerate() {
                    if i == slot || c.is_empty() {
                        continue;
                    }
                    let d = dot(c, &e);
                    axpy(-d, c, &mut e);
                }
            }
            let norm = dot(&e, &e).sqrt();
            if best.as_ref().map_or(true, |(b, _)| norm > *b) {
                best = Some((norm, e));
            }
        }
        let (norm, mut e) = best.expect("n >= 1");
        e.iter_mut().for_each(|x| *x /= norm);
        w[slot] = e;
    }
}

fn cols_to_matrix(cols: &[Vec<f64>]) -> DenseMatrix {
    let r = cols.first().map_or(0, |c| c.len());
    let mut out = DenseMatrix::zeros(r, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    out
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DenseMatrix {
    let c = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * c);
    for r in rows {
        data.extend_from_slice(r);
    }
    DenseMatrix::from_raw(rows.len(), c, data)
}

/// Makes the largest-magnitude entry of each left vector positive, flipping
/// the paired right vector with it. Unpaired vectors are normalized alone.
fn apply_sign_convention(u: &mut DenseMatrix, vt: &mut DenseMatrix, k: usize) {
    for j in 0..u.cols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..u.rows() {
            let x = u[(i, j)];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            if j < k {
                vt.row_mut(j).iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    for j in k..vt.rows() {
        let row = vt.row_mut(j);
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in row.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `V·diag(1/σ)·Uᵀ·y`, dropping singular values at or below `rcond·σ₁`.
pub fn pinv_apply(svd: &SvdResult, y: &[f64], rcond: f64) -> Result<Vec<f64>, LinalgError> {
    let k = svd.sigma.len();
    if y.len() != svd.u.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "pinv_apply",
            left: svd.u.shape(),
            right: (y.len(), 1),
        });
    }
    if !(rcond > 0.0 && rcond < 1.0) {
        return Err(LinalgError::InvalidArgument(format!("rcond {rcond} outside (0,1)")));
    }
    let s1 = svd.sigma.first().copied().unwrap_or(0.0);
    let cut = rcond * s1;
    let mut coef = vec![0.0; k];
    for j in 0..k {
        let s = svd.sigma[j];
        if s > cut && s > 0.0 {
            let mut acc = 0.0;
            for (i, &yi) in y.iter().enumerate() {
                acc += svd.u[(i, j)] * yi;
            }
            coef[j] = acc / s;
        }
    }
    let mut out = vec![0.0; svd.vt.cols()];
    for (j, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            axpy(c, svd.vt.row(j), &mut out);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::invert;
    use crate::masks::SeededGaussianStream;

    /// Cyclic Jacobi eigenvalues of a symmetric matrix.
    fn symmetric_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
        let n = a.rows();
        let mut s = a.clone();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in 0..n {
                    if p != q {
                        off += s[(p, q)] * s[(p, q)];
                    }
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if s[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * s[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let (skp, skq) = (s[(k, p)], s[(k, q)]);
                        s[(k, p)] = c * skp - sn * skq;
                        s[(k, q)] = sn * skp + c * skq;
                    }
                    for k in 0..n {
                        let (spk, sqk) = (s[(p, k)], s[(q, k)]);
                        s[(p, k)] = c * spk - sn * sqk;
                        s[(q, k)] = sn * spk + c * sqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| s[(i, i)]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn check_invariants(a: &DenseMatrix, r: &SvdResult) {
        let (m, n) = a.shape();
        assert_eq!(r.u.shape(), (m, m));
        assert_eq!(r.vt.shape(), (n, n));
        assert_eq!(r.sigma.len(), m.min(n));
        assert!(r.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.sigma.iter().all(|&s| s >= 0.0));
        assert!(r.u.orthogonality_defect() <= 1e-10);
        assert!(r.vt.transpose().orthogonality_defect() <= 1e-10);
        let err = r.reconstruct().max_abs_diff(a);
        assert!(err <= 1e-9 * a.max_abs().max(1.0), "reconstruction {err}");
    }

    #[test]
    fn diagonal_input() {
        let a = DenseMatrix::from_diag(&[3.0, 2.0]);
        let r = svd_dense(&a).unwrap();
        assert_eq!(r.sigma, vec![3.0, 2.0]);
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((r.u[(i, j)].abs() - target).abs() < 1e-15);
                assert!((r.vt[(i, j)].abs() - target).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn permutation_input() {
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let r = svd_dense(&a).unwrap();
        assert!((r.sigma[0] - 1.0).abs() < 1e-15 && (r.sigma[1] - 1.0).abs() < 1e-15);
        check_invariants(&a, &r);
    }

    #[test]
    fn rank_one_column() {
        let a = DenseMatrix::from_rows(&[&[3.0, 0.0], &[4.0, 0.0]]);
        let r = svd_dense(&a).unwrap();
        // Closed-form 2x2 eigenvalues of AᵀA = [[25,0],[0,0]].
        let (p, q, s) = (25.0f64, 0.0f64, 0.0f64);
        let tr = p + q;
        let disc = ((p - q) * (p - q) / 4.0 + s * s).sqrt();
        let oracle = [(tr / 2.0 + disc).sqrt(), (tr / 2.0 - disc).max(0.0).sqrt()];
        assert!((r.sigma[0] - oracle[0]).abs() < 1e-14);
        assert!((r.sigma[1] - oracle[1]).abs() < 1e-14);
        check_invariants(&a, &r);
    }

    #[test]
    fn zero_matrix() {
        let a = DenseMatrix::zeros(3, 2);
        let r = svd_dense(&a).unwrap();
        assert_eq!(r.sigma, vec![0.0, 0.0]);
        check_invariants(&a, &r);
    }

    #[test]
    fn eigen_oracle_on_random_8x8() {
        let mut s = SeededGaussianStream::new(77);
        for _ in 0..20 {
            let a = s.matrix(8, 8);
            let r = svd_dense(&a).unwrap();
            let ev = symmetric_eigenvalues(&a.t_matmul(&a).unwrap());
            for (sv, e) in r.sigma.iter().zip(&ev) {
                let oracle = e.max(0.0).sqrt();
                assert!((sv - oracle).abs() <= 1e-8 * r.sigma[0], "{sv} vs {oracle}");
            }
        }
    }

    #[test]
    fn random_shapes_reconstruct() {
        let mut s = SeededGaussianStream::new(123);
        for &(m, n) in &[(1, 1), (1, 7), (7, 1), (5, 9), (9, 5), (33, 20), (20, 64), (128, 40)] {
            let mut a = s.matrix(m, n);
            a.scale(1e3);
            let r = svd_dense(&a).unwrap();
            check_invariants(&a, &r);
            let t = svd_thin(&a).unwrap();
            let k = m.min(n);
            assert_eq!(t.u.shape(), (m, k));
            assert_eq!(t.vt.shape(), (k, n));
            assert_eq!(t.sigma, r.sigma);
            assert!(t.reconstruct().max_abs_diff(&a) <= 1e-9 * a.max_abs());
        }
    }

    #[test]
    fn rank_deficient_gets_orthonormal_completion() {
        let mut s = SeededGaussianStream::new(8);
        let b = s.matrix(10, 3);
        let c = s.matrix(3, 7);
        let a = b.matmul(&c).unwrap();
        let r = svd_dense(&a).unwrap();
        check_invariants(&a, &r);
        assert!(r.sigma[3] <= 1e-12 * r.sigma[0]);
    }

    #[test]
    fn sign_convention_holds() {
        let a = SeededGaussianStream::new(4).matrix(6, 4);
        let r = svd_dense(&a).unwrap();
        for j in 0..6 {
            let col = r.u.column(j);
            let big = col.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn pinv_identity() {
        let r = svd_dense(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(pinv_apply(&r, &[2.0, 3.0], 1e-10).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn pinv_truncates_zero_singular_value() {
        let r = svd_dense(&DenseMatrix::from_diag(&[2.0, 0.0])).unwrap();
        let w = pinv_apply(&r, &[4.0, 7.0], 1e-10).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-15 && w[1].abs() < 1e-15);
        assert!(pinv_apply(&r, &[1.0], 1e-10).is_err());
    }

    #[test]
    fn pinv_matches_normal_equations() {
        let mut s = SeededGaussianStream::new(31);
        let x = s.matrix(4, 3);
        let y = s.vector(4);
        let w = pinv_apply(&svd_dense(&x).unwrap(), &y, 1e-12).unwrap();
        let xtx = x.t_matmul(&x).unwrap();
        let xty = x.t_matvec(&y).unwrap();
        let oracle = invert(&xtx).unwrap().matvec(&xty).unwrap();
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
