//! Accuracy of a federated factorization against the centralized one.

use fedsvd::linalg::{norm2, svd_thin, DenseMatrix, LinalgError};
use fedsvd::masks::SeededGaussianStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// A rank-`r` factorization with the users' `Vᵢᵀ` blocks stacked side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

impl Factors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Result<DenseMatrix, LinalgError> {
        let mut us = self.u.clone();
        us.scale_cols(&self.sigma);
        us.matmul(&self.vt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub rank: usize,
    /// RMSE of `U` after flipping each column to the closer sign.
    pub u_rmse: f64,
    /// Same for the rows of `Vᵀ`.
    pub v_rmse: f64,
    /// `max |σ̂ᵢ − σᵢ| / σ₁`.
    pub sigma_rel_err: f64,
    /// `‖UUᵀ − ÛÛᵀ‖₂`.
    pub projection_distance: f64,
    /// `100 · mean|X − ÛΣ̂V̂ᵀ| / mean|X|`.
    pub mape_percent: f64,
}

impl Metrics {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "rank={}\nu_rmse={:e}\nv_rmse={:e}\nsigma_rel_err={:e}\nprojection_distance={:e}\nmape_percent={:e}\nsign_alignment=per-column, closer sign\n",
            self.rank, self.u_rmse, self.v_rmse, self.sigma_rel_err, self.projection_distance, self.mape_percent
        )
    }
}

/// RMSE between the first columns of `est` and `reference`, each column of
/// `est` negated if that brings it closer.
pub fn sign_aligned_rmse(est: &DenseMatrix, reference: &DenseMatrix) -> Result<f64, MetricsError> {
    if est.rows() != reference.rows() || est.cols() > reference.cols() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{:?} against {:?}",
            est.shape(),
            reference.shape()
        )));
    }
    let (a, b) = (est.transpose(), reference.transpose());
    let mut sum = 0.0;
    for j in 0..a.rows() {
        let (x, y) = (a.row(j), b.row(j));
        let plus: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
        let minus: f64 = x.iter().zip(y).map(|(p, q)| (p + q).powi(2)).sum();
        sum += plus.min(minus);
    }
    Ok((sum / (a.rows() * a.cols()) as f64).sqrt())
}

/// `‖AAᵀ − BBᵀ‖₂` for matrices with orthonormal columns, by power iteration
/// on the square of the difference without forming it.
pub fn projection_distance(a: &DenseMatrix, b: &DenseMatrix, seed: u64) -> Result<f64, MetricsError> {
    if a.rows() != b.rows() {
        return Err(MetricsError::DimensionMismatch(format!("{} vs {} rows", a.rows(), b.rows())));
    }
    let apply = |x: &[f64]| -> Result<Vec<f64>, LinalgError> {
        let pa = a.matvec(&a.t_matvec(x)?)?;
        let pb = b.matvec(&b.t_matvec(x)?)?;
        Ok(pa.iter().zip(&pb).map(|(p, q)| p - q).collect())
    };
    let mut x = SeededGaussianStream::new(seed).vector(a.rows());
    let n = norm2(&x);
    x.iter_mut().for_each(|v| *v /= n);
    let mut est = 0.0;
    for _ in 0..1000 {
        let dx = apply(&x)?;
        let next_est = norm2(&dx);
        let y = apply(&dx)?;
        let ny = norm2(&y);
        if ny == 0.0 {
            return Ok(next_est);
        }
        x = y.into_iter().map(|v| v / ny).collect();
        if (next_est - est).abs() <= 1e-10 * next_est {
            return Ok(next_est.max(est));
        }
        est = next_est;
    }
    Ok(est)
}

/// `100 · mean|X − ÛΣ̂V̂ᵀ| / mean|X|`.
pub fn reconstruction_mape(x: &DenseMatrix, f: &Factors) -> Result<f64, MetricsError> {
    let rec = f.reconstruct()?;
    if rec.shape() != x.shape() {
        return Err(MetricsError::DimensionMismatch(format!("{:?} vs {:?}", rec.shape(), x.shape())));
    }
    let err: f64 = rec.data().iter().zip(x.data()).map(|(a, b)| (a - b).abs()).sum();
    let base: f64 = x.data().iter().map(|v| v.abs()).sum();
    Ok(100.0 * err / base)
}

/// Mean squared residual of `X·w` against `y`.
pub fn lr_mse(x: &DenseMatrix, w: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let pred = x.matvec(w)?;
    if pred.len() != y.len() {
        return Err(MetricsError::DimensionMismatch(format!("{} predictions, {} labels", pred.len(), y.len())));
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64)
}

/// All metrics of `result` against the thin SVD of the plaintext `x`.
pub fn metric_suite(result: &Factors, x: &DenseMatrix) -> Result<Metrics, MetricsError> {
    let r = result.rank();
    if result.u.shape() != (x.rows(), r) || result.vt.shape() != (r, x.cols()) {
        return Err(MetricsError::DimensionMismatch(format!(
            "U {:?}, Vt {:?} for rank {r} and data {:?}",
            result.u.shape(),
            result.vt.shape(),
            x.shape()
        )));
    }
    let oracle = svd_thin(x)?;
    if r > oracle.sigma.len() {
        return Err(MetricsError::DimensionMismatch(format!("rank {r} above {}", oracle.sigma.len())));
    }
    let top = oracle.sigma.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let sigma_rel_err = result
        .sigma
        .iter()
        .zip(&oracle.sigma)
        .map(|(a, b)| (a - b).abs() / top)
        .fold(0.0, f64::max);
    let ou = oracle.u.slice_cols(0..r);
    Ok(Metrics {
        rank: r,
        u_rmse: sign_aligned_rmse(&result.u, &ou)?,
        v_rmse: sign_aligned_rmse(&result.vt.transpose(), &oracle.vt.slice_rows(0..r).transpose())?,
        sigma_rel_err,
        projection_distance: projection_distance(&result.u, &ou, 0)?,
        mape_percent: reconstruction_mape(x, result)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors(x: &DenseMatrix) -> Factors {
        let s = svd_thin(x).unwrap();
        Factors {
            u: s.u,
            sigma: s.sigma,
            vt: s.vt,
        }
    }

    #[test]
    fn oracle_scores_zero() {
        let x = SeededGaussianStream::new(1).matrix(5, 8);
        let m = metric_suite(&factors(&x), &x).unwrap();
        assert!(m.u_rmse < 1e-14 && m.v_rmse < 1e-14 && m.sigma_rel_err < 1e-14);
        assert!(m.projection_distance < 1e-13 && m.mape_percent < 1e-12);
    }

    #[test]
    fn sign_flips_do_not_count() {
        let x = SeededGaussianStream::new(2).matrix(6, 4);
        let mut f = factors(&x);
        f.u.scale_cols(&[-1.0, 1.0, -1.0, 1.0]);
        let mut vt = f.vt.transpose();
        vt.scale_cols(&[-1.0, 1.0, -1.0, 1.0]);
        f.vt = vt.transpose();
        let m = metric_suite(&f, &x).unwrap();
        assert!(m.u_rmse < 1e-14 && m.v_rmse < 1e-14 && m.projection_distance < 1e-13);
    }

    #[test]
    fn orthogonal_subspaces_are_at_distance_one() {
        let e = DenseMatrix::identity(4);
        let d = projection_distance(&e.slice_cols(0..2), &e.slice_cols(2..4), 3).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shapes_are_checked() {
        let x = DenseMatrix::zeros(3, 3);
        let f = Factors {
            u: DenseMatrix::zeros(2, 1),
            sigma: vec![1.0],
            vt: DenseMatrix::zeros(1, 3),
        };
        assert!(matches!(metric_suite(&f, &x), Err(MetricsError::DimensionMismatch(_))));
        assert!(lr_mse(&x, &[1.0, 1.0, 1.0], &[0.0]).is_err());
    }
}
