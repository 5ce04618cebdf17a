//! Applications built on a federated SVD session: principal components over
//! horizontally split samples, least squares over vertically split features,
//! and latent semantic embeddings.

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::linalg::DenseMatrix;
use crate::protocol::{run_fedsvd, ProtocolError, SessionConfig, Task};
use crate::secagg::{aggregate_batches, mask_batch, Codec, PairwiseMaskPlan};

/// One user's principal components and projected data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub index: usize,
    /// Shared `m×r` leading left singular vectors.
    pub components: DenseMatrix,
    /// `Uᵣᵀ·Xᵢ`, `r×nᵢ`.
    pub projection: DenseMatrix,
}

/// Federated least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LrResult {
    /// Per-user weights, one per local feature.
    pub weights: Vec<Vec<f64>>,
    /// Intercept, held by the label holder when fitted.
    pub intercept: Option<f64>,
    /// Mean squared training residual.
    pub mse: f64,
}

/// Truncated factorization with private right factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    /// Each user's `r×nᵢ` rows of `Vᵀ`.
    pub vt: Vec<DenseMatrix>,
}

fn truncation_check(cfg: &SessionConfig, r: usize) -> Result<(), ProtocolError> {
    let full = cfg.m.min(cfg.n());
    if r == 0 || r > full {
        return Err(ProtocolError::Config(format!("rank {r} outside 1..={full}")));
    }
    Ok(())
}

/// Row means of `[X₁, …, X_k]` through one round of pairwise-masked
/// aggregation: each party contributes its row sums and column count.
pub fn secure_row_means(parts: &[DenseMatrix], codec: Codec, seed: u64) -> Result<Vec<f64>, ProtocolError> {
    let k = parts.len();
    let m = parts
        .first()
        .ok_or_else(|| ProtocolError::Config("no parties".into()))?
        .rows();
    let plans = PairwiseMaskPlan::deal(k, &mut ChaCha20Rng::seed_from_u64(seed));
    let mut slabs = Vec::with_capacity(k);
    for (i, (x, plan)) in parts.iter().zip(&plans).enumerate() {
        if x.rows() != m {
            return Err(ProtocolError::Config(format!("party {i} has {} rows, expected {m}", x.rows())));
        }
        let mut local: Vec<f64> = (0..m).map(|r| x.row(r).iter().sum()).collect();
        local.push(x.cols() as f64);
        let slab = DenseMatrix::new(1, m + 1, local)?;
        slabs.push((i, mask_batch(plan, 0, 0, &slab, codec)?));
    }
    let total = aggregate_batches(&slabs, k, codec)?;
    let count = total[(0, m)].round();
    if count <= 0.0 {
        return Err(ProtocolError::Config("no columns to average".into()));
    }
    Ok((0..m).map(|r| total[(0, r)] / count).collect())
}

/// Subtracts `means[r]` from every entry of row `r`.
pub fn center_rows(x: &DenseMatrix, means: &[f64]) -> DenseMatrix {
    let mut out = x.clone();
    for (r, mu) in means.iter().enumerate().take(out.rows()) {
        out.row_mut(r).iter_mut().for_each(|v| *v -= mu);
    }
    out
}

/// PCA over samples split between users. Each `parts[i]` is
/// `features×samplesᵢ`, already centered; the shared side is the feature axis.
pub fn fed_pca(cfg: &SessionConfig, parts: &[DenseMatrix], r: usize) -> Result<Vec<PcaResult>, ProtocolError> {
    truncation_check(cfg, r)?;
    let mut cfg = cfg.clone();
    cfg.task = Task::Pca;
    cfg.truncation = Some(r);
    let out = run_fedsvd(&cfg, parts, None)?;
    out.users
        .into_iter()
        .map(|u| {
            let components = u.u.expect("pca releases U");
            let projection = components.t_matmul(&parts[u.index])?;
            Ok(PcaResult {
                index: u.index,
                components,
                projection,
            })
        })
        .collect()
}

/// Least squares over features split between users; `label_holder` owns
/// `y` and, with `fit_intercept`, the appended column of ones.
pub fn fed_lr(
    cfg: &SessionConfig,
    parts: &[DenseMatrix],
    y: &[f64],
    label_holder: usize,
    fit_intercept: bool,
) -> Result<LrResult, ProtocolError> {
    let mut cfg = cfg.clone();
    cfg.task = Task::LinReg { label_holder };
    cfg.truncation = None;
    if label_holder >= parts.len() {
        return Err(ProtocolError::Config(format!("label holder {label_holder} is not a user")));
    }
    let mut data = parts.to_vec();
    if fit_intercept {
        let ones = DenseMatrix::new(cfg.m, 1, vec![1.0; cfg.m])?;
        data[label_holder] = DenseMatrix::hstack(&[&parts[label_holder], &ones])?;
        cfg.widths[label_holder] += 1;
    }
    let out = run_fedsvd(&cfg, &data, Some(y))?;
    let mut weights: Vec<Vec<f64>> = out
        .users
        .into_iter()
        .map(|u| u.weights.expect("regression releases weights"))
        .collect();
    let intercept = if fit_intercept { weights[label_holder].pop() } else { None };

    let mut pred = vec![intercept.unwrap_or(0.0); cfg.m];
    for (x, w) in parts.iter().zip(&weights) {
        for (p, v) in pred.iter_mut().zip(x.matvec(w)?) {
            *p += v;
        }
    }
    let mse = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / cfg.m as f64;
    Ok(LrResult {
        weights,
        intercept,
        mse,
    })
}

/// Rank-`r` factorization whose right factors stay with their owners.
pub fn fed_lsa(cfg: &SessionConfig, parts: &[DenseMatrix], r: usize) -> Result<LsaResult, ProtocolError> {
    truncation_check(cfg, r)?;
    let mut cfg = cfg.clone();
    cfg.task = Task::Svd;
    cfg.truncation = Some(r);
    cfg.recover_u = true;
    cfg.recover_v = true;
    let out = run_fedsvd(&cfg, parts, None)?;
    let first = &out.users[0];
    let u = first.u.clone().expect("svd releases U");
    let sigma = first.sigma.clone();
    let vt = out
        .users
        .into_iter()
        .map(|u| u.vt.expect("svd releases V"))
        .collect();
    Ok(LsaResult { u, sigma, vt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::SeededGaussianStream;

    #[test]
    fn secure_means_match_plain_means() {
        let a = SeededGaussianStream::new(1).matrix(4, 3);
        let b = SeededGaussianStream::new(2).matrix(4, 5);
        let got = secure_row_means(&[a.clone(), b.clone()], Codec::default(), 7).unwrap();
        for (r, g) in got.iter().enumerate() {
            let want = (a.row(r).iter().sum::<f64>() + b.row(r).iter().sum::<f64>()) / 8.0;
            assert!((g - want).abs() < 1e-11);
        }
        let c = center_rows(&a, &got);
        assert!((c[(2, 1)] - (a[(2, 1)] - got[2])).abs() == 0.0);
    }

    #[test]
    fn identity_regression_is_exact() {
        let cfg = SessionConfig::new(2, vec![1, 1], 1);
        let parts = [
            DenseMatrix::from_rows(&[&[1.0], &[0.0]]),
            DenseMatrix::from_rows(&[&[0.0], &[1.0]]),
        ];
        let res = fed_lr(&cfg, &parts, &[2.0, 3.0], 0, false).unwrap();
        assert!((res.weights[0][0] - 2.0).abs() < 1e-12);
        assert!((res.weights[1][0] - 3.0).abs() < 1e-12);
        assert!(res.mse < 1e-24);
        assert_eq!(res.intercept, None);
    }

    #[test]
    fn rank_bounds_are_checked() {
        let cfg = SessionConfig::new(3, vec![2, 2], 2);
        let parts = [DenseMatrix::zeros(3, 2), DenseMatrix::zeros(3, 2)];
        assert!(matches!(fed_pca(&cfg, &parts, 4), Err(ProtocolError::Config(_))));
        assert!(matches!(fed_lsa(&cfg, &parts, 0), Err(ProtocolError::Config(_))));
    }
}
