use super::AttackError;
use crate::linalg::DenseMatrix;
use crate::masks::SeededGaussianStream;

/// Rows whose centred norm is below this fraction of the largest are treated
/// as constant.
const CONSTANT_ROW_RTOL: f64 = 1e-12;

/// Row-to-row correlation between a recovered matrix and the raw data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonScore {
    /// Largest `|ρ|` over all (recovered row, raw row) pairs.
    pub max_abs: f64,
    /// Mean `|ρ|` over a greedy one-to-one matching, largest pairs first.
    pub assignment_mean: f64,
}

/// Rows centred and scaled to unit norm; constant rows are dropped.
fn standardized(x: &DenseMatrix) -> DenseMatrix {
    let n = x.cols() as f64;
    let mut rows: Vec<Vec<f64>> = (0..x.rows())
        .map(|r| {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            row.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = rows.iter().map(|r| crate::linalg::norm2(r)).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::new();
    let mut kept = 0;
    for (row, norm) in rows.iter_mut().zip(norms) {
        if norm > CONSTANT_ROW_RTOL * top && norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
            out.extend_from_slice(row);
            kept += 1;
        }
    }
    DenseMatrix::new(kept, x.cols(), out).expect("row lengths agree")
}

/// Pearson correlation of every recovered row against every raw row.
/// Invariant to row order and sign on either side; constant rows take no
/// part in the pairing.
pub fn pearson_score(recovered: &DenseMatrix, truth: &DenseMatrix) -> Result<PearsonScore, AttackError> {
    if recovered.cols() != truth.cols() {
        return Err(AttackError::ShapeMismatch(format!(
            "recovered rows have length {}, raw rows {}",
            recovered.cols(),
            truth.cols()
        )));
    }
    let a = standardized(recovered);
    let b = standardized(truth);
    if a.rows() == 0 || b.rows() == 0 {
        return Err(AttackError::ZeroVariance);
    }
    let corr = a.matmul(&b.transpose())?;
    let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(corr.rows() * corr.cols());
    let mut max_abs: f64 = 0.0;
    for i in 0..corr.rows() {
        for (j, c) in corr.row(i).iter().enumerate() {
            let c = c.abs().min(1.0);
            max_abs = max_abs.max(c);
            pairs.push((c, i as u32, j as u32));
        }
    }
    pairs.sort_unstable_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; corr.rows()];
    let mut used_b = vec![false; corr.cols()];
    let target = corr.rows().min(corr.cols());
    let (mut sum, mut matched) = (0.0, 0);
    for (c, i, j) in pairs {
        if !used_a[i as usize] && !used_b[j as usize] {
            used_a[i as usize] = true;
            used_b[j as usize] = true;
            sum += c;
            matched += 1;
            if matched == target {
                break;
            }
        }
    }
    Ok(PearsonScore {
        max_abs,
        assignment_mean: sum / matched as f64,
    })
}

/// Score of a seeded standard Gaussian matrix shaped like `truth`: what an
/// attack recovering nothing would report.
pub fn random_baseline(truth: &DenseMatrix, seed: u64) -> Result<PearsonScore, AttackError> {
    let noise = SeededGaussianStream::new(seed).matrix(truth.rows(), truth.cols());
    pearson_score(&noise, truth)
}
