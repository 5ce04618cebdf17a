//! Privacy evaluation harness: ICA recovery attacks on masked matrices and
//! Pearson scoring against the raw data.
//!
//! Masking `X′ = P·X·Q` hides the rows of `X` behind `P` and the columns
//! behind `Q`. An attacker treats the rows of `X′` (or of `X′ᵀ`) as linear
//! mixtures of independent non-Gaussian sources and tries to unmix them.

mod ica;
mod score;
mod suite;

pub use ica::{fastica, ica_blockwise, IcaOptions, IcaOutput};
pub use score::{pearson_score, random_baseline, PearsonScore};
pub use suite::{attack_suite, mask_for_attack, mean_score, AttackConfig, AttackReport, Method, Side};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::masks::MaskError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("{requested} components requested, at most {max} available")]
    InvalidComponents { requested: usize, max: usize },
    #[error("every row has zero variance")]
    ZeroVariance,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
