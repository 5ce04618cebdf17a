use std::collections::BTreeMap;
use std::fmt;

use super::{fastica, ica_blockwise, pearson_score, random_baseline, AttackError, IcaOptions};
use crate::linalg::{blockdiag_mul_left, blockdiag_mul_right, BlockDiagMatrix, DenseMatrix};
use crate::masks::{efficient_orthogonal, generate_p, SeededGaussianStream};

/// Salts separating the right mask and the baseline noise from `P`'s seed.
const Q_SEED_SALT: u64 = 0x51_7cc1_b727_220a;
const BASELINE_SEED_SALT: u64 = 0x2545_f491_4f6c_dd1d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Random,
    Ica,
    IcaBlock,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Random => "random",
            Method::Ica => "ica",
            Method::IcaBlock => "ica_b",
        })
    }
}

/// Which mask the attack tries to strip: `Rows` unmixes the rows of `X′`
/// against the rows of `X`, `Cols` works on `X′ᵀ` against `Xᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Rows,
    Cols,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Rows => "rows",
            Side::Cols => "cols",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub method: Method,
    /// Block size of the masks attacked; `None` for the baseline.
    pub block_size: Option<usize>,
    /// Block size the attacker exploits.
    pub b_assumed: Option<usize>,
    pub side: Side,
    pub seed: u64,
    pub max_abs_pearson: f64,
    pub assignment_mean: f64,
    pub components: usize,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub b_values: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Cap on sources per ICA run, bounding the unmixing dimension.
    pub max_components: usize,
    pub ica: IcaOptions,
    /// Replace both masks by identities; for calibrating the harness.
    pub identity_masks: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            b_values: vec![10, 100, 1000],
            seeds: (0..5).collect(),
            max_components: 64,
            ica: IcaOptions::default(),
            identity_masks: false,
        }
    }
}

/// `P·X·Q` with block size `b`; `P` comes from `seed` exactly as in a
/// session, `Q` from a salted seed.
pub fn mask_for_attack(x: &DenseMatrix, b: usize, seed: u64) -> Result<DenseMatrix, AttackError> {
    let p = generate_p(seed, x.rows(), b)?;
    let q = efficient_orthogonal(x.cols(), b, &mut SeededGaussianStream::new(seed ^ Q_SEED_SALT))?;
    apply(x, &p, &q)
}

fn apply(x: &DenseMatrix, p: &BlockDiagMatrix, q: &BlockDiagMatrix) -> Result<DenseMatrix, AttackError> {
    Ok(blockdiag_mul_right(&blockdiag_mul_left(p, x)?, q)?)
}

/// Masks `x` once per seed and block size, then scores the random baseline,
/// plain ICA and block-aware ICA on both sides.
pub fn attack_suite(x: &DenseMatrix, cfg: &AttackConfig) -> Result<Vec<AttackReport>, AttackError> {
    if cfg.b_values.contains(&0) || cfg.max_components == 0 {
        return Err(AttackError::InvalidArgument("block sizes and component cap must be positive".into()));
    }
    let truth_t = x.transpose();
    let truth = |side| if side == Side::Rows { x } else { &truth_t };
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for side in [Side::Rows, Side::Cols] {
            let s = random_baseline(truth(side), seed ^ BASELINE_SEED_SALT)?;
            out.push(AttackReport {
                method: Method::Random,
                block_size: None,
                b_assumed: None,
                side,
                seed,
                max_abs_pearson: s.max_abs,
                assignment_mean: s.assignment_mean,
                components: truth(side).rows(),
                converged: 0,
            });
        }
        for &b in &cfg.b_values {
            let masked = if cfg.identity_masks {
                x.clone()
            } else {
                mask_for_attack(x, b, seed)?
            };
            let masked_t = masked.transpose();
            for side in [Side::Rows, Side::Cols] {
                let observed = if side == Side::Rows { &masked } else { &masked_t };
                let k = observed.rows().min(observed.cols()).min(cfg.max_components);
                let runs = [
                    (Method::Ica, None, fastica(observed, k, seed, &cfg.ica)?),
                    (
                        Method::IcaBlock,
                        Some(b),
                        ica_blockwise(observed, b, seed, cfg.max_components, &cfg.ica)?,
                    ),
                ];
                for (method, b_assumed, ica) in runs {
                    let s = pearson_score(&ica.sources, truth(side))?;
                    log::debug!("seed {seed} b {b} {side} {method}: {:.5}", s.max_abs);
                    out.push(AttackReport {
                        method,
                        block_size: Some(b),
                        b_assumed,
                        side,
                        seed,
                        max_abs_pearson: s.max_abs,
                        assignment_mean: s.assignment_mean,
                        components: ica.sources.rows(),
                        converged: ica.converged_count(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Mean over seeds of the stronger side's score for one method and block
/// size. The baseline ignores `b`.
pub fn mean_score(reports: &[AttackReport], method: Method, b: Option<usize>) -> Option<f64> {
    let mut per_seed: BTreeMap<u64, f64> = BTreeMap::new();
    for r in reports {
        if r.method == method && (method == Method::Random || r.block_size == b) {
            let e = per_seed.entry(r.seed).or_insert(0.0);
            *e = e.max(r.max_abs_pearson);
        }
    }
    if per_seed.is_empty() {
        return None;
    }
    Some(per_seed.values().sum::<f64>() / per_seed.len() as f64)
}
