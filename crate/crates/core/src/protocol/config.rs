use super::ProtocolError;
use crate::secagg::Codec;

/// Relative cutoff for singular values inverted by the regression task.
pub const LR_RCOND: f64 = 1e-12;

/// What the server computes from the factorization and what users receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Task {
    /// Shared `U`, `Σ` and private `Vᵢᵀ`, optionally truncated.
    #[default]
    Svd,
    /// Only the top left singular vectors are sent; no `Σ`, no `V`.
    Pca,
    /// Least squares against a label vector held by one user.
    LinReg { label_holder: usize },
}

/// Parameters shared by all roles of one session.
///
/// Users hold column blocks of widths `widths` of an `m×n` matrix. The
/// trusted authority derives every mask seed from `master_seed`; users draw
/// their private recovery masks from `user_seed`, which never leaves them.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub session_id: u64,
    pub m: usize,
    pub widths: Vec<usize>,
    pub block_size: usize,
    pub master_seed: u64,
    pub user_seed: u64,
    pub codec: Codec,
    pub truncation: Option<usize>,
    pub recover_u: bool,
    pub recover_v: bool,
    /// Bytes per secure-aggregation batch of one party's contribution.
    pub batch_budget: usize,
    pub task: Task,
}

impl SessionConfig {
    pub fn new(m: usize, widths: Vec<usize>, block_size: usize) -> Self {
        Self {
            session_id: 1,
            m,
            widths,
            block_size,
            master_seed: 0,
            user_seed: 0x5eed,
            codec: Codec::default(),
            truncation: None,
            recover_u: true,
            recover_v: true,
            batch_budget: 64 << 20,
            task: Task::Svd,
        }
    }

    pub fn n(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.widths.len()
    }

    /// Number of singular triplets the server releases.
    pub fn rank(&self) -> usize {
        let full = self.m.min(self.n());
        self.truncation.map_or(full, |r| r.min(full))
    }

    /// First global column of each user's block.
    pub fn col_starts(&self) -> Vec<usize> {
        self.widths
            .iter()
            .scan(0, |acc, w| {
                let s = *acc;
                *acc += w;
                Some(s)
            })
            .collect()
    }

    pub fn label_holder(&self) -> Option<usize> {
        match self.task {
            Task::LinReg { label_holder } => Some(label_holder),
            _ => None,
        }
    }

    /// Whether users run the `Vᵢᵀ` exchange.
    pub fn runs_v_recovery(&self) -> bool {
        self.recover_v && self.task == Task::Svd
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |s: String| Err(ProtocolError::Config(s));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.widths.is_empty() {
            return bad("at least one user is required".into());
        }
        if let Some(i) = self.widths.iter().position(|&w| w == 0) {
            return bad(format!("user {i} has no columns"));
        }
        if self.k() > u32::MAX as usize {
            return bad("too many users".into());
        }
        if self.block_size == 0 {
            return bad("block size must be positive".into());
        }
        if let Some(r) = self.truncation {
            if r == 0 || r > self.m.min(self.n()) {
                return bad(format!("truncation {r} outside 1..={}", self.m.min(self.n())));
            }
        }
        if let Task::LinReg { label_holder } = self.task {
            if label_holder >= self.k() {
                return bad(format!("label holder {label_holder} is not a user"));
            }
            if self.truncation.is_some() {
                return bad("regression does not take a truncation".into());
            }
        }
        if self.batch_budget < 8 * self.n() {
            return bad(format!(
                "batch budget {} cannot hold one row of {} bytes",
                self.batch_budget,
                8 * self.n()
            ));
        }
        Ok(())
    }
}
