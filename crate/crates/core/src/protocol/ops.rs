use std::collections::BTreeMap;
use std::ops::Range;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use super::{ProtocolError, SessionConfig};
use crate::linalg::{blockdiag_mul_left, blockdiag_mul_right, svd_thin, BlockDiagMatrix, DenseMatrix, LinalgError};
use crate::masks::{
    efficient_orthogonal, invert_r, mask_strip_transpose, split_q, strip_mul_right, QStrip,
    SeededGaussianStream,
};
use crate::secagg::{aggregate_batches, minibatch_schedule, Codec, MaskedSlab, PairwiseMaskPlan, SecAggError};
use crate::storage::{MemoryTracker, Reservation};

/// Everything the trusted authority hands out for one session.
#[derive(Debug, Clone)]
pub struct TaSetup {
    pub p_seed: u64,
    pub strips: Vec<QStrip>,
    pub pair_plans: Vec<PairwiseMaskPlan>,
}

/// Derives the left-mask seed, draws `Q` and splits it into user strips,
/// and deals one pairwise seed per pair of users.
pub fn ta_init(cfg: &SessionConfig) -> Result<TaSetup, ProtocolError> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.master_seed);
    let p_seed = rng.next_u64();
    let q_seed = rng.next_u64();
    let pair_plans = PairwiseMaskPlan::deal(cfg.k(), &mut rng);
    let q = efficient_orthogonal(cfg.n(), cfg.block_size, &mut SeededGaussianStream::new(q_seed))?;
    let strips = split_q(&q, &cfg.widths)?;
    Ok(TaSetup {
        p_seed,
        strips,
        pair_plans,
    })
}

/// `P·Xᵢ·Qᵢ` without densifying either mask.
pub fn user_mask_data(x: &DenseMatrix, p: &BlockDiagMatrix, strip: &QStrip) -> Result<DenseMatrix, ProtocolError> {
    let px = blockdiag_mul_left(p, x)?;
    Ok(strip_mul_right(&px, strip)?)
}

/// Server-side secure aggregation of row batches into `X′`.
///
/// Slabs of a batch are held until all parties have delivered it, then
/// summed and released. The tracker accounts the held slabs and the decoded
/// batch, not the assembled output.
#[derive(Debug)]
pub struct Collector {
    rows: usize,
    cols: usize,
    parties: usize,
    codec: Codec,
    schedule: Vec<Range<usize>>,
    pending: BTreeMap<u32, Vec<(usize, MaskedSlab, Reservation)>>,
    done: Vec<bool>,
    out: DenseMatrix,
    tracker: MemoryTracker,
}

impl Collector {
    pub fn new(
        rows: usize,
        cols: usize,
        parties: usize,
        codec: Codec,
        budget_bytes: usize,
        tracker: MemoryTracker,
    ) -> Result<Self, ProtocolError> {
        let schedule = minibatch_schedule(rows, cols, budget_bytes)?;
        Ok(Self {
            rows,
            cols,
            parties,
            codec,
            done: vec![false; schedule.len()],
            schedule,
            pending: BTreeMap::new(),
            out: DenseMatrix::zeros(rows, cols),
            tracker,
        })
    }

    pub fn schedule(&self) -> &[Range<usize>] {
        &self.schedule
    }

    pub fn add(&mut self, party: usize, slab: MaskedSlab) -> Result<(), ProtocolError> {
        let idx = slab.batch as usize;
        let expected = self
            .schedule
            .get(idx)
            .ok_or_else(|| SecAggError::SlabMismatch(format!("batch {idx} not scheduled")))?;
        if slab.rows != *expected || slab.cols != self.cols || slab.words.len() != expected.len() * self.cols {
            return Err(SecAggError::SlabMismatch(format!(
                "party {party} batch {idx}: rows {:?} x {} cols, expected {expected:?} x {}",
                slab.rows, slab.cols, self.cols
            ))
            .into());
        }
        if self.done[idx] {
            return Err(SecAggError::DuplicateParty { party, batch: slab.batch }.into());
        }
        let res = self.tracker.reserve(8 * slab.words.len())?;
        let entry = self.pending.entry(slab.batch).or_default();
        entry.push((party, slab, res));
        if entry.len() == self.parties {
            let held = self.pending.remove(&(idx as u32)).expect("just inserted");
            let _sum_res = self.tracker.reserve(8 * expected.len() * self.cols)?;
            let (slabs, _reservations): (Vec<_>, Vec<_>) =
                held.into_iter().map(|(p, s, r)| ((p, s), r)).unzip();
            let sum = aggregate_batches(&slabs, self.parties, self.codec)?;
            self.out.set_block(expected.start, 0, &sum);
            self.done[idx] = true;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<DenseMatrix, ProtocolError> {
        if let Some(batch) = self.done.iter().position(|d| !d) {
            let have: Vec<usize> = self
                .pending
                .get(&(batch as u32))
                .map(|v| v.iter().map(|(p, _, _)| *p).collect())
                .unwrap_or_default();
            let party = (0..self.parties).find(|p| !have.contains(p)).unwrap_or(0);
            return Err(SecAggError::MissingParty {
                party,
                batch: batch as u32,
            }
            .into());
        }
        debug_assert_eq!(self.out.shape(), (self.rows, self.cols));
        Ok(self.out)
    }
}

/// Aggregates every party's masked batches for a configured session.
pub fn csp_collect(
    cfg: &SessionConfig,
    slabs: impl IntoIterator<Item = (usize, MaskedSlab)>,
) -> Result<DenseMatrix, ProtocolError> {
    let mut c = Collector::new(
        cfg.m,
        cfg.n(),
        cfg.k(),
        cfg.codec,
        cfg.batch_budget,
        MemoryTracker::unlimited(),
    )?;
    for (party, slab) in slabs {
        c.add(party, slab)?;
    }
    c.finish()
}

/// The server's factorization; `vt` stays on the server.
#[derive(Debug, Clone, PartialEq)]
pub struct CspFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

pub fn csp_factorize(x: &DenseMatrix, truncation: Option<usize>) -> Result<CspFactors, ProtocolError> {
    let mut svd = svd_thin(x)?;
    if let Some(r) = truncation {
        if r == 0 || r > svd.sigma.len() {
            return Err(ProtocolError::Config(format!(
                "truncation {r} outside 1..={}",
                svd.sigma.len()
            )));
        }
        svd = svd.truncate(r);
    }
    Ok(CspFactors {
        u: svd.u,
        sigma: svd.sigma,
        vt: svd.vt,
    })
}

/// `U = Pᵀ·U′`.
pub fn user_recover_u(u_masked: &DenseMatrix, p: &BlockDiagMatrix) -> Result<DenseMatrix, ProtocolError> {
    Ok(blockdiag_mul_left(&p.transpose(), u_masked)?)
}

/// `Vᵢᵀ = [Vᵢᵀ]ᴿ·Rᵢ⁻¹`, blockwise.
pub fn user_recover_v(masked_v: &DenseMatrix, r: &BlockDiagMatrix) -> Result<DenseMatrix, ProtocolError> {
    let r_inv = invert_r(r)?;
    Ok(blockdiag_mul_right(masked_v, &r_inv)?)
}

/// The `Vᵢᵀ` exchange with both sides in one call: the server multiplies
/// its `V′ᵀ` by the masked strip, and the user removes `Rᵢ`.
pub fn recover_v_roundtrip(
    strip: &QStrip,
    r: &BlockDiagMatrix,
    vt_masked: &DenseMatrix,
) -> Result<DenseMatrix, ProtocolError> {
    let qr = mask_strip_transpose(strip, r)?;
    let masked_v = qr.left_mul(vt_masked)?;
    user_recover_v(&masked_v, r)
}

/// `Qᵢ·w` for a vector `w` of length `n`.
pub fn strip_mul_vec(strip: &QStrip, w: &[f64]) -> Result<Vec<f64>, ProtocolError> {
    if w.len() != strip.dim {
        return Err(LinalgError::DimensionMismatch {
            op: "strip_mul_vec",
            left: (strip.width(), strip.dim),
            right: (w.len(), 1),
        }
        .into());
    }
    let mut out = vec![0.0; strip.width()];
    for seg in &strip.segments {
        let ws = &w[seg.col_offset..seg.col_offset + seg.width()];
        for (i, o) in out[seg.local_row_start..seg.local_row_start + seg.height()]
            .iter_mut()
            .enumerate()
        {
            *o += crate::linalg::dot(seg.data.row(i), ws);
        }
    }
    Ok(out)
}
