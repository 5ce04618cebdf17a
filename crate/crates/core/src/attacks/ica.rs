use nalgebra::{DMatrix, SymmetricEigen};

use super::AttackError;
use crate::linalg::{axpy, dot, norm2, DenseMatrix};
use crate::masks::SeededGaussianStream;

/// Whitening drops directions whose variance is below this fraction of the
/// largest one.
const WHITEN_RCOND: f64 = 1e-12;

/// Seed offset between consecutive row blocks in [`ica_blockwise`].
const BLOCK_SEED_STRIDE: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub max_iter: usize,
    /// Stop once `| |⟨w, w⁺⟩| − 1 |` falls below this.
    pub tol: f64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

/// Estimated sources, one row each, with per-component convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaOutput {
    pub sources: DenseMatrix,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl IcaOutput {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn converged_count(&self) -> usize {
        self.converged.iter().filter(|&&c| c).count()
    }
}

/// Row-centred data projected onto its leading principal directions and
/// scaled to unit variance, `k×N`. Returns fewer than `k` rows when the data
/// has lower numerical rank.
fn whiten(x: &DenseMatrix, k: usize) -> Result<DenseMatrix, AttackError> {
    let (d, n) = x.shape();
    let mut xc = x.clone();
    for r in 0..d {
        let row = xc.row_mut(r);
        let mean = row.iter().sum::<f64>() / n as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    // Eigen-decompose whichever second-moment matrix is smaller; both share
    // their nonzero spectrum.
    let small_side = d <= n;
    let gram = if small_side {
        let t = xc.transpose();
        t.t_matmul(&t)?
    } else {
        xc.t_matmul(&xc)?
    };
    let dim = gram.rows();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, gram.data()));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if top <= 0.0 {
        return Err(AttackError::ZeroVariance);
    }
    let keep: Vec<usize> = order
        .into_iter()
        .take(k)
        .take_while(|&j| eig.eigenvalues[j] > WHITEN_RCOND * top)
        .collect();
    if keep.len() < k {
        log::debug!("whitening kept {} of {k} components", keep.len());
    }

    let mut z = DenseMatrix::zeros(keep.len(), n);
    if small_side {
        // zᵢ = uᵢᵀ·Xc / √λᵢ with λᵢ the covariance eigenvalue.
        let mut basis = DenseMatrix::zeros(d, keep.len());
        for (c, &j) in keep.iter().enumerate() {
            for r in 0..d {
                basis.set(r, c, eig.eigenvectors[(r, j)]);
            }
        }
        z = basis.t_matmul(&xc)?;
        for (c, &j) in keep.iter().enumerate() {
            let s = (eig.eigenvalues[j] / n as f64).sqrt();
            z.row_mut(c).iter_mut().for_each(|v| *v /= s);
        }
    } else {
        // zᵢ = √N·vᵢᵀ with vᵢ the Gram eigenvector.
        let scale = (n as f64).sqrt();
        for (c, &j) in keep.iter().enumerate() {
            for (t, v) in z.row_mut(c).iter_mut().enumerate() {
                *v = scale * eig.eigenvectors[(t, j)];
            }
        }
    }
    Ok(z)
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(w, b);
        axpy(-c, b, w);
    }
}

/// Deflation FastICA with the log-cosh contrast. Rows of `x` are observed
/// mixtures, columns are samples. Components that hit `max_iter` are kept and
/// flagged as unconverged.
pub fn fastica(x: &DenseMatrix, n_components: usize, seed: u64, opts: &IcaOptions) -> Result<IcaOutput, AttackError> {
    let max = x.rows().min(x.cols());
    if n_components == 0 || n_components > max {
        return Err(AttackError::InvalidComponents {
            requested: n_components,
            max,
        });
    }
    let z = whiten(x, n_components)?;
    let (k, n) = z.shape();
    let inv_n = 1.0 / n as f64;
    let mut stream = SeededGaussianStream::new(seed);
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut converged = Vec::with_capacity(k);
    let mut iterations = Vec::with_capacity(k);

    for _ in 0..k {
        let mut w = stream.vector(k);
        orthogonalize(&mut w, &found);
        let norm = norm2(&w);
        w.iter_mut().for_each(|v| *v /= norm);
        let mut done = false;
        let mut it = 0;
        while it < opts.max_iter {
            it += 1;
            let mut g = z.t_matvec(&w)?;
            let mut dg = 0.0;
            for v in g.iter_mut() {
                *v = v.tanh();
                dg += 1.0 - *v * *v;
            }
            let mut next = z.matvec(&g)?;
            next.iter_mut().zip(&w).for_each(|(a, b)| *a = *a * inv_n - dg * inv_n * b);
            orthogonalize(&mut next, &found);
            let norm = norm2(&next);
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            next.iter_mut().for_each(|v| *v /= norm);
            let change = (dot(&next, &w).abs() - 1.0).abs();
            w = next;
            if change < opts.tol {
                done = true;
                break;
            }
        }
        converged.push(done);
        iterations.push(it);
        found.push(w);
    }

    let mut sources = DenseMatrix::zeros(k, n);
    for (r, w) in found.iter().enumerate() {
        sources.row_mut(r).copy_from_slice(&z.t_matvec(w)?);
    }
    Ok(IcaOutput {
        sources,
        converged,
        iterations,
    })
}

/// ICA run independently on each `b_assumed`-row block of `x`, the last
/// block possibly shorter; outputs are stacked in block order. Each block
/// yields at most `max_components` sources, and blocks without variance
/// contribute none.
pub fn ica_blockwise(
    x: &DenseMatrix,
    b_assumed: usize,
    seed: u64,
    max_components: usize,
    opts: &IcaOptions,
) -> Result<IcaOutput, AttackError> {
    if b_assumed == 0 || max_components == 0 {
        return Err(AttackError::InvalidArgument(format!(
            "block size {b_assumed}, components {max_components}"
        )));
    }
    let (d, n) = x.shape();
    let mut rows: Vec<DenseMatrix> = Vec::new();
    let mut converged = Vec::new();
    let mut iterations = Vec::new();
    for (j, start) in (0..d).step_by(b_assumed).enumerate() {
        let end = (start + b_assumed).min(d);
        let block = x.slice_rows(start..end);
        let k = (end - start).min(n).min(max_components);
        let block_seed = seed.wrapping_add((j as u64).wrapping_mul(BLOCK_SEED_STRIDE));
        match fastica(&block, k, block_seed, opts) {
            Ok(out) => {
                rows.push(out.sources);
                converged.extend(out.converged);
                iterations.extend(out.iterations);
            }
            Err(AttackError::ZeroVariance) => log::debug!("rows {start}..{end} are constant; skipped"),
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(AttackError::ZeroVariance);
    }
    let refs: Vec<&DenseMatrix> = rows.iter().collect();
    Ok(IcaOutput {
        sources: DenseMatrix::vstack(&refs)?,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_sources(seed: u64, k: usize, n: usize) -> DenseMatrix {
        let mut s = SeededGaussianStream::new(seed);
        let mut m = DenseMatrix::zeros(k, n);
        for v in m.data_mut() {
            *v = (s.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        m
    }

    #[test]
    fn whitened_rows_are_orthonormal() {
        let x = uniform_sources(1, 4, 300);
        for z in [whiten(&x, 4).unwrap(), whiten(&x.transpose().slice_rows(0..4), 4).unwrap()] {
            let c = z.matmul(&z.transpose()).unwrap();
            let mut c = c;
            c.scale(1.0 / z.cols() as f64);
            assert!(c.max_abs_diff(&DenseMatrix::identity(z.rows())) < 1e-10);
        }
    }

    #[test]
    fn wide_and_tall_whitening_agree_on_rank() {
        let x = uniform_sources(2, 3, 8);
        let stacked = DenseMatrix::vstack(&[&x, &x, &x, &x]).unwrap();
        // 12 rows over 8 samples but rank 3.
        assert_eq!(whiten(&stacked, 8).unwrap().rows(), 3);
    }

    #[test]
    fn component_count_is_checked() {
        let x = uniform_sources(3, 3, 10);
        let opts = IcaOptions::default();
        assert!(matches!(fastica(&x, 4, 0, &opts), Err(AttackError::InvalidComponents { .. })));
        assert!(matches!(fastica(&x, 0, 0, &opts), Err(AttackError::InvalidComponents { .. })));
        let flat = DenseMatrix::from_rows(&[&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]]);
        assert_eq!(fastica(&flat, 1, 0, &opts), Err(AttackError::ZeroVariance));
    }

    #[test]
    fn deterministic_per_seed() {
        let x = uniform_sources(4, 5, 200);
        let opts = IcaOptions::default();
        assert_eq!(fastica(&x, 5, 9, &opts).unwrap(), fastica(&x, 5, 9, &opts).unwrap());
        assert_eq!(
            ica_blockwise(&x, 2, 9, 5, &opts).unwrap(),
            ica_blockwise(&x, 2, 9, 5, &opts).unwrap()
        );
    }
}
