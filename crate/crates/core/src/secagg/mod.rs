//! Pairwise-mask secure aggregation over row batches.
//!
//! Every pair of parties shares a seed. For each batch, party `i` adds the
//! pair stream for partners `j > i` and subtracts it for `j < i`, so the
//! masks cancel in the sum and the aggregator learns only the total.

mod codec;

pub use codec::{Codec, FixedPointCodec, DEFAULT_FRAC_BITS};

use std::collections::BTreeMap;
use std::ops::Range;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::linalg::DenseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SecAggError {
    #[error("value {value:e} exceeds the codec limit {limit:e}")]
    OverflowRisk { value: f64, limit: f64 },
    #[error("budget of {budget} bytes cannot hold one row of {row_bytes} bytes")]
    BudgetTooSmall { budget: usize, row_bytes: usize },
    #[error("batch {batch}: missing contribution from party {party}")]
    MissingParty { party: usize, batch: u32 },
    #[error("batch {batch}: duplicate contribution from party {party}")]
    DuplicateParty { party: usize, batch: u32 },
    #[error("mismatched slabs: {0}")]
    SlabMismatch(String),
    #[error("malformed slab payload: {0}")]
    MalformedSlab(String),
    #[error("invalid codec: {0}")]
    InvalidCodec(String),
    #[error("party {party} has no seed shared with {peer}")]
    MissingSeed { party: usize, peer: usize },
}

pub type PairSeed = [u8; 32];

/// One party's view of the pairwise seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMaskPlan {
    party: usize,
    party_count: usize,
    seeds: BTreeMap<usize, PairSeed>,
}

impl PairwiseMaskPlan {
    pub fn new(
        party: usize,
        party_count: usize,
        seeds: impl IntoIterator<Item = (usize, PairSeed)>,
    ) -> Result<Self, SecAggError> {
        let seeds: BTreeMap<usize, PairSeed> = seeds.into_iter().collect();
        for peer in 0..party_count {
            if peer != party && !seeds.contains_key(&peer) {
                return Err(SecAggError::MissingSeed { party, peer });
            }
        }
        Ok(Self {
            party,
            party_count,
            seeds,
        })
    }

    /// Draws a fresh seed for every unordered pair and returns each party's plan.
    pub fn deal(party_count: usize, rng: &mut impl RngCore) -> Vec<PairwiseMaskPlan> {
        let mut per_party: Vec<BTreeMap<usize, PairSeed>> = vec![BTreeMap::new(); party_count];
        for i in 0..party_count {
            for j in (i + 1)..party_count {
                let mut s = [0u8; 32];
                rng.fill_bytes(&mut s);
                per_party[i].insert(j, s);
                per_party[j].insert(i, s);
            }
        }
        per_party
            .into_iter()
            .enumerate()
            .map(|(party, seeds)| PairwiseMaskPlan {
                party,
                party_count,
                seeds,
            })
            .collect()
    }

    pub fn party(&self) -> usize {
        self.party
    }

    pub fn party_count(&self) -> usize {
        self.party_count
    }

    pub fn seeds(&self) -> impl Iterator<Item = (usize, &PairSeed)> {
        self.seeds.iter().map(|(k, v)| (*k, v))
    }

    fn pair_stream(seed: &PairSeed, batch: u32) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(*seed);
        rng.set_stream(batch as u64);
        rng
    }
}

/// Masked rows `[row_start, row_end)` of one party's contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSlab {
    pub batch: u32,
    pub rows: Range<usize>,
    pub cols: usize,
    pub words: Vec<u64>,
}

impl MaskedSlab {
    /// Wire form: batch `u32`, row range as two `u64`, then the words, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.words.len());
        out.extend_from_slice(&self.batch.to_le_bytes());
        out.extend_from_slice(&(self.rows.start as u64).to_le_bytes());
        out.extend_from_slice(&(self.rows.end as u64).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SecAggError> {
        if bytes.len() < 20 || (bytes.len() - 20) % 8 != 0 {
            return Err(SecAggError::MalformedSlab(format!("length {}", bytes.len())));
        }
        let batch = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let start = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let end = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if end < start {
            return Err(SecAggError::MalformedSlab(format!("row range {start}..{end}")));
        }
        let words: Vec<u64> = bytes[20..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rows = end - start;
        let cols = if rows == 0 { 0 } else { words.len() / rows };
        if rows * cols != words.len() {
            return Err(SecAggError::MalformedSlab(format!(
                "{} words for {rows} rows",
                words.len()
            )));
        }
        Ok(Self {
            batch,
            rows: start..end,
            cols,
            words,
        })
    }

    pub fn byte_len(&self) -> usize {
        20 + 8 * self.words.len()
    }
}

/// Contiguous row ranges covering `[0, rows)`, each within `budget_bytes`.
pub fn minibatch_schedule(rows: usize, cols: usize, budget_bytes: usize) -> Result<Vec<Range<usize>>, SecAggError> {
    let row_bytes = 8 * cols.max(1);
    let per = budget_bytes / row_bytes;
    if per == 0 {
        return Err(SecAggError::BudgetTooSmall {
            budget: budget_bytes,
            row_bytes,
        });
    }
    Ok((0..rows)
        .step_by(per)
        .map(|s| s..(s + per).min(rows))
        .collect())
}

/// Encodes a slab and adds this party's pairwise masks for `batch`.
pub fn mask_batch(
    plan: &PairwiseMaskPlan,
    batch: u32,
    row_start: usize,
    slab: &DenseMatrix,
    codec: Codec,
) -> Result<MaskedSlab, SecAggError> {
    let mut words: Vec<u64> = match codec {
        Codec::FixedPoint(c) => {
            let mut w = Vec::with_capacity(slab.data().len());
            for &x in slab.data() {
                w.push(c.encode(x)?);
            }
            w
        }
        Codec::Float => {
            if let Some(x) = slab.data().iter().find(|v| !v.is_finite()) {
                return Err(SecAggError::OverflowRisk {
                    value: *x,
                    limit: f64::MAX,
                });
            }
            slab.data().iter().map(|x| x.to_bits()).collect()
        }
    };
    for (&peer, seed) in &plan.seeds {
        let mut rng = PairwiseMaskPlan::pair_stream(seed, batch);
        let add = peer > plan.party;
        match codec {
            Codec::FixedPoint(_) => {
                for w in words.iter_mut() {
                    let m = rng.next_u64();
                    *w = if add { w.wrapping_add(m) } else { w.wrapping_sub(m) };
                }
            }
            Codec::Float => {
                for w in words.iter_mut() {
                    let m = float_mask(rng.next_u64());
                    let v = f64::from_bits(*w);
                    *w = if add { v + m } else { v - m }.to_bits();
                }
            }
        }
    }
    Ok(MaskedSlab {
        batch,
        rows: row_start..row_start + slab.rows(),
        cols: slab.cols(),
        words,
    })
}

fn float_mask(x: u64) -> f64 {
    ((x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)) * 2.0 - 1.0
}

/// Sums one batch from all `party_count` parties and decodes it.
///
/// Contributions are added in party order, which fixes the result bits.
pub fn aggregate_batches(
    slabs: &[(usize, MaskedSlab)],
    party_count: usize,
    codec: Codec,
) -> Result<DenseMatrix, SecAggError> {
    let first = slabs
        .first()
        .map(|(_, s)| s)
        .ok_or(SecAggError::MissingParty { party: 0, batch: 0 })?;
    let batch = first.batch;
    let mut by_party: Vec<Option<&MaskedSlab>> = vec![None; party_count];
    for (party, slab) in slabs {
        if *party >= party_count {
            return Err(SecAggError::SlabMismatch(format!("party {party} out of range")));
        }
        if slab.batch != batch || slab.rows != first.rows || slab.cols != first.cols {
            return Err(SecAggError::SlabMismatch(format!(
                "party {party} sent batch {} rows {:?}, expected batch {batch} rows {:?}",
                slab.batch, slab.rows, first.rows
            )));
        }
        if by_party[*party].replace(slab).is_some() {
            return Err(SecAggError::DuplicateParty { party: *party, batch });
        }
    }
    if let Some(missing) = by_party.iter().position(|s| s.is_none()) {
        return Err(SecAggError::MissingParty { party: missing, batch });
    }
    let len = first.words.len();
    let data: Vec<f64> = match codec {
        Codec::FixedPoint(c) => {
            let mut acc = vec![0u64; len];
            for s in by_party.iter().flatten() {
                for (a, w) in acc.iter_mut().zip(&s.words) {
                    *a = a.wrapping_add(*w);
                }
            }
            acc.into_iter().map(|w| c.decode(w)).collect()
        }
        Codec::Float => {
            let mut acc = vec![0.0f64; len];
            for s in by_party.iter().flatten() {
                for (a, w) in acc.iter_mut().zip(&s.words) {
                    *a += f64::from_bits(*w);
                }
            }
            acc
        }
    };
    let rows = first.rows.len();
    DenseMatrix::new(rows, first.cols, data).map_err(|e| SecAggError::MalformedSlab(e.to_string()))
}
