use std::fmt;

use super::message::ProtocolMessage;
use super::ops::{csp_factorize, strip_mul_vec, ta_init, user_mask_data, user_recover_u, user_recover_v, Collector};
use super::{ProtocolError, SessionConfig, Task, LR_RCOND};
use crate::linalg::{blockdiag_mul_left, pinv_apply, DenseMatrix, LinalgError, SvdResult};
use crate::masks::{generate_p, generate_r, mask_strip_transpose, QStrip, SeededGaussianStream};
use crate::secagg::{mask_batch, minibatch_schedule, PairwiseMaskPlan};
use crate::storage::MemoryTracker;
use crate::transport::{Endpoint, MessageType, PartyId, TrafficStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// One line of a role's message log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub role: PartyId,
    pub step: u16,
    pub direction: Direction,
    pub peer: PartyId,
    pub msg_type: MessageType,
    /// Wire length including the frame header.
    pub bytes: usize,
}

impl fmt::Display for TranscriptEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.direction {
            Direction::Sent => "send",
            Direction::Received => "recv",
        };
        write!(
            f,
            "{} step={} {} {} {} {}",
            self.role,
            self.step,
            dir,
            self.peer,
            self.msg_type.name(),
            self.bytes
        )
    }
}

fn step_of(t: MessageType) -> u16 {
    match t {
        MessageType::SeedP | MessageType::StripQ | MessageType::PairSeeds => 1,
        MessageType::MaskedBatch | MessageType::MaskedLabel => 2,
        MessageType::ResultUSigma | MessageType::MaskedWeights => 3,
        MessageType::MaskedQiR | MessageType::MaskedViR => 4,
        MessageType::Abort | MessageType::Hello => 0,
    }
}

/// An endpoint bound to one session, decoding frames into messages and
/// logging every exchange.
pub struct RoleChannel {
    ep: Endpoint,
    session_id: u64,
    step: u16,
    transcript: Vec<TranscriptEntry>,
}

impl RoleChannel {
    pub fn new(ep: Endpoint, session_id: u64) -> Self {
        Self {
            ep,
            session_id,
            step: 0,
            transcript: Vec::new(),
        }
    }

    pub fn me(&self) -> PartyId {
        self.ep.me()
    }

    pub fn send(&mut self, to: PartyId, msg: ProtocolMessage) -> Result<(), ProtocolError> {
        let step = match msg.msg_type() {
            MessageType::Abort => self.step,
            t => step_of(t),
        };
        let frame = msg.into_frame(self.session_id, step);
        self.ep.send(to, &frame)?;
        self.step = self.step.max(step);
        self.log(Direction::Sent, to, step, frame.msg_type, frame.wire_len());
        Ok(())
    }

    /// Next message from `from`, which must be of type `expected`.
    pub fn recv(&mut self, from: PartyId, expected: MessageType) -> Result<ProtocolMessage, ProtocolError> {
        let (sender, frame) = self.ep.recv_from(from)?;
        self.log(Direction::Received, sender, frame.step, frame.msg_type, frame.wire_len());
        if frame.msg_type == MessageType::Abort {
            return Err(ProtocolError::Aborted {
                by: sender,
                reason: String::from_utf8_lossy(&frame.payload).into_owned(),
            });
        }
        if frame.session_id != self.session_id {
            return Err(ProtocolError::Malformed {
                kind: frame.msg_type,
                reason: format!("session {} in session {}", frame.session_id, self.session_id),
            });
        }
        if frame.msg_type != expected {
            return Err(ProtocolError::Unexpected {
                from: sender,
                expected,
                got: frame.msg_type,
            });
        }
        if frame.step != step_of(expected) || frame.step < self.step {
            return Err(ProtocolError::Malformed {
                kind: frame.msg_type,
                reason: format!("step {} while at step {}", frame.step, self.step),
            });
        }
        self.step = frame.step;
        ProtocolMessage::from_frame(&frame)
    }

    /// Tells every peer the session is over; delivery failures are ignored.
    pub fn abort(&mut self, reason: &str) {
        let peers: Vec<PartyId> = self.ep.peers().collect();
        for p in peers {
            let _ = self.send(p, ProtocolMessage::Abort(reason.to_string()));
        }
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn stats(&self) -> &TrafficStats {
        self.ep.stats()
    }

    fn log(&mut self, direction: Direction, peer: PartyId, step: u16, msg_type: MessageType, bytes: usize) {
        self.transcript.push(TranscriptEntry {
            role: self.ep.me(),
            step,
            direction,
            peer,
            msg_type,
            bytes,
        });
    }

    fn finish(self) -> (Vec<TranscriptEntry>, TrafficStats) {
        let stats = self.ep.stats().clone();
        (self.transcript, stats)
    }
}

fn guarded<T>(
    chan: &mut RoleChannel,
    body: impl FnOnce(&mut RoleChannel) -> Result<T, ProtocolError>,
) -> Result<T, ProtocolError> {
    let out = body(chan);
    if let Err(e) = &out {
        if !matches!(e, ProtocolError::Aborted { .. }) {
            log::error!("{} aborting: {e}", chan.me());
            chan.abort(&e.to_string());
        }
    }
    out
}

fn mismatch(what: &str, got: impl fmt::Debug, want: impl fmt::Debug) -> ProtocolError {
    ProtocolError::Config(format!("{what}: received {got:?}, configured {want:?}"))
}

fn user_id(i: usize) -> PartyId {
    PartyId::User(i as u32)
}

#[derive(Debug, Clone)]
pub struct TaOutput {
    pub transcript: Vec<TranscriptEntry>,
    pub stats: TrafficStats,
}

/// Step one: sends every user the left-mask seed, its strip of `Q` and its
/// pairwise seeds, then forgets all of them.
pub fn run_ta(cfg: &SessionConfig, ep: Endpoint) -> Result<TaOutput, ProtocolError> {
    let mut chan = RoleChannel::new(ep, cfg.session_id);
    guarded(&mut chan, |chan| {
        let setup = ta_init(cfg)?;
        for (i, (strip, plan)) in setup.strips.into_iter().zip(setup.pair_plans).enumerate() {
            let to = user_id(i);
            chan.send(
                to,
                ProtocolMessage::SeedP {
                    seed: setup.p_seed,
                    m: cfg.m as u64,
                    block_size: cfg.block_size as u64,
                },
            )?;
            chan.send(to, ProtocolMessage::StripQ(strip))?;
            chan.send(
                to,
                ProtocolMessage::PairSeeds {
                    party: i as u32,
                    party_count: cfg.k() as u32,
                    seeds: plan.seeds().map(|(p, s)| (p as u32, *s)).collect(),
                },
            )?;
        }
        Ok(())
    })?;
    let (transcript, stats) = chan.finish();
    Ok(TaOutput { transcript, stats })
}

#[derive(Debug, Clone)]
pub struct CspOutput {
    /// Singular values the server computed (it learns them in any mode).
    pub sigma: Vec<f64>,
    /// Peak bytes of masked slabs held during aggregation.
    pub aggregation_peak_bytes: usize,
    pub transcript: Vec<TranscriptEntry>,
    pub stats: TrafficStats,
}

/// Steps two to four at the server: aggregate, factorize, release the
/// masked results and answer each user's `Vᵢᵀ` request.
pub fn run_csp(cfg: &SessionConfig, ep: Endpoint) -> Result<CspOutput, ProtocolError> {
    let mut chan = RoleChannel::new(ep, cfg.session_id);
    let tracker = MemoryTracker::unlimited();
    let sigma = guarded(&mut chan, |chan| {
        cfg.validate()?;
        let (m, n, k) = (cfg.m, cfg.n(), cfg.k());
        let mut collector = Collector::new(m, n, k, cfg.codec, cfg.batch_budget, tracker.clone())?;
        let batches = collector.schedule().len();
        for _ in 0..batches {
            for i in 0..k {
                match chan.recv(user_id(i), MessageType::MaskedBatch)? {
                    ProtocolMessage::MaskedBatch(slab) => collector.add(i, slab)?,
                    _ => unreachable!("recv checks the type"),
                }
            }
        }
        let x_masked = collector.finish()?;

        if let Task::LinReg { label_holder } = cfg.task {
            let y_masked = match chan.recv(user_id(label_holder), MessageType::MaskedLabel)? {
                ProtocolMessage::MaskedLabel(v) => v,
                _ => unreachable!("recv checks the type"),
            };
            if y_masked.len() != m {
                return Err(mismatch("masked label length", y_masked.len(), m));
            }
            let f = csp_factorize(&x_masked, None)?;
            let cut = LR_RCOND * f.sigma[0];
            let dropped = f.sigma.iter().filter(|&&s| s <= cut).count();
            if dropped > 0 {
                log::warn!("regression matrix is rank deficient; dropping {dropped} singular values");
            }
            let svd = SvdResult {
                u: f.u,
                sigma: f.sigma,
                vt: f.vt,
            };
            let w = pinv_apply(&svd, &y_masked, LR_RCOND)?;
            for i in 0..k {
                chan.send(user_id(i), ProtocolMessage::MaskedWeights(w.clone()))?;
            }
            return Ok(svd.sigma);
        }

        let f = csp_factorize(&x_masked, cfg.truncation)?;
        drop(x_masked);
        let send_u = cfg.recover_u || cfg.task == Task::Pca;
        for i in 0..k {
            let u = if send_u { f.u.clone() } else { DenseMatrix::zeros(0, 0) };
            let sigma = if cfg.task == Task::Pca { Vec::new() } else { f.sigma.clone() };
            chan.send(user_id(i), ProtocolMessage::ResultUSigma { u, sigma })?;
        }
        if cfg.runs_v_recovery() {
            for (i, &w) in cfg.widths.iter().enumerate() {
                let qr = match chan.recv(user_id(i), MessageType::MaskedQiR)? {
                    ProtocolMessage::MaskedQiR(b) => b,
                    _ => unreachable!("recv checks the type"),
                };
                if (qr.rows, qr.cols) != (n, w) {
                    return Err(mismatch("masked strip shape", (qr.rows, qr.cols), (n, w)));
                }
                let masked_v = qr.left_mul(&f.vt)?;
                chan.send(user_id(i), ProtocolMessage::MaskedViR(masked_v))?;
            }
        }
        Ok(f.sigma)
    })?;
    let (transcript, stats) = chan.finish();
    Ok(CspOutput {
        sigma,
        aggregation_peak_bytes: tracker.peak(),
        transcript,
        stats,
    })
}

/// A user's private inputs.
#[derive(Debug, Clone, Copy)]
pub struct UserInput<'a> {
    pub index: usize,
    /// `m×nᵢ` block of columns.
    pub data: &'a DenseMatrix,
    /// Length-`m` labels, for the label holder of a regression session.
    pub label: Option<&'a [f64]>,
}

/// What a user holds at the end of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct FedSvdResult {
    pub index: usize,
    /// Shared left singular vectors, `m×r`.
    pub u: Option<DenseMatrix>,
    /// Shared singular values; empty when the task does not release them.
    pub sigma: Vec<f64>,
    /// This user's private rows of `Vᵀ`, `r×nᵢ`.
    pub vt: Option<DenseMatrix>,
    /// This user's regression weights, length `nᵢ`.
    pub weights: Option<Vec<f64>>,
    pub transcript: Vec<TranscriptEntry>,
    pub stats: TrafficStats,
}

fn recovery_stream(cfg: &SessionConfig, index: usize) -> SeededGaussianStream {
    SeededGaussianStream::new(cfg.user_seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

struct Setup {
    p_seed: u64,
    strip: QStrip,
    plan: PairwiseMaskPlan,
}

fn receive_setup(cfg: &SessionConfig, chan: &mut RoleChannel, index: usize) -> Result<Setup, ProtocolError> {
    let (n, k) = (cfg.n(), cfg.k());
    let p_seed = match chan.recv(PartyId::Ta, MessageType::SeedP)? {
        ProtocolMessage::SeedP { seed, m, block_size } => {
            if (m, block_size) != (cfg.m as u64, cfg.block_size as u64) {
                return Err(mismatch("left mask shape", (m, block_size), (cfg.m, cfg.block_size)));
            }
            seed
        }
        _ => unreachable!("recv checks the type"),
    };
    let strip = match chan.recv(PartyId::Ta, MessageType::StripQ)? {
        ProtocolMessage::StripQ(s) => s,
        _ => unreachable!("recv checks the type"),
    };
    let start = cfg.col_starts()[index];
    let want = start..start + cfg.widths[index];
    if strip.owner != index || strip.dim != n || strip.col_range != want {
        return Err(mismatch(
            "strip placement",
            (strip.owner, strip.dim, &strip.col_range),
            (index, n, &want),
        ));
    }
    strip.validate()?;
    let plan = match chan.recv(PartyId::Ta, MessageType::PairSeeds)? {
        ProtocolMessage::PairSeeds {
            party,
            party_count,
            seeds,
        } => {
            if (party as usize, party_count as usize) != (index, k) {
                return Err(mismatch("pair seed owner", (party, party_count), (index, k)));
            }
            PairwiseMaskPlan::new(index, k, seeds.into_iter().map(|(p, s)| (p as usize, s)))?
        }
        _ => unreachable!("recv checks the type"),
    };
    Ok(Setup { p_seed, strip, plan })
}

/// A user's side of steps one to four.
pub fn run_user(cfg: &SessionConfig, input: UserInput<'_>, ep: Endpoint) -> Result<FedSvdResult, ProtocolError> {
    let mut chan = RoleChannel::new(ep, cfg.session_id);
    let index = input.index;
    let (u, sigma, vt, weights) = guarded(&mut chan, |chan| {
        cfg.validate()?;
        let (m, n) = (cfg.m, cfg.n());
        if index >= cfg.k() {
            return Err(ProtocolError::Config(format!("user {index} of {}", cfg.k())));
        }
        if input.data.shape() != (m, cfg.widths[index]) {
            return Err(LinalgError::DimensionMismatch {
                op: "user data",
                left: input.data.shape(),
                right: (m, cfg.widths[index]),
            }
            .into());
        }
        let holds_label = cfg.label_holder() == Some(index);
        if holds_label && input.label.map(|y| y.len()) != Some(m) {
            return Err(ProtocolError::Config(format!("label holder needs {m} labels")));
        }

        let Setup { p_seed, strip, plan } = receive_setup(cfg, chan, index)?;
        let p = generate_p(p_seed, m, cfg.block_size)?;

        let x_masked = user_mask_data(input.data, &p, &strip)?;
        for (b, rows) in minibatch_schedule(m, n, cfg.batch_budget)?.into_iter().enumerate() {
            let slab = x_masked.slice_rows(rows.clone());
            let masked = mask_batch(&plan, b as u32, rows.start, &slab, cfg.codec)?;
            chan.send(PartyId::Csp, ProtocolMessage::MaskedBatch(masked))?;
        }
        drop(x_masked);
        if holds_label {
            let y = DenseMatrix::column_vector(input.label.expect("checked above"));
            let y_masked = blockdiag_mul_left(&p, &y)?.into_data();
            chan.send(PartyId::Csp, ProtocolMessage::MaskedLabel(y_masked))?;
        }

        if matches!(cfg.task, Task::LinReg { .. }) {
            let w_masked = match chan.recv(PartyId::Csp, MessageType::MaskedWeights)? {
                ProtocolMessage::MaskedWeights(w) => w,
                _ => unreachable!("recv checks the type"),
            };
            let w = strip_mul_vec(&strip, &w_masked)?;
            return Ok((None, Vec::new(), None, Some(w)));
        }

        let (u_masked, sigma) = match chan.recv(PartyId::Csp, MessageType::ResultUSigma)? {
            ProtocolMessage::ResultUSigma { u, sigma } => (u, sigma),
            _ => unreachable!("recv checks the type"),
        };
        let r = cfg.rank();
        let u = if cfg.recover_u || cfg.task == Task::Pca {
            if u_masked.shape() != (m, r) {
                return Err(mismatch("masked U shape", u_masked.shape(), (m, r)));
            }
            Some(user_recover_u(&u_masked, &p)?)
        } else {
            None
        };
        let vt = if cfg.runs_v_recovery() {
            let rmask = generate_r(&strip, &mut recovery_stream(cfg, index))?;
            let qr = mask_strip_transpose(&strip, &rmask)?;
            chan.send(PartyId::Csp, ProtocolMessage::MaskedQiR(qr))?;
            let masked_v = match chan.recv(PartyId::Csp, MessageType::MaskedViR)? {
                ProtocolMessage::MaskedViR(v) => v,
                _ => unreachable!("recv checks the type"),
            };
            if masked_v.shape() != (r, cfg.widths[index]) {
                return Err(mismatch("masked V shape", masked_v.shape(), (r, cfg.widths[index])));
            }
            Some(user_recover_v(&masked_v, &rmask)?)
        } else {
            None
        };
        Ok((u, sigma, vt, None))
    })?;
    let (transcript, stats) = chan.finish();
    Ok(FedSvdResult {
        index,
        u,
        sigma,
        vt,
        weights,
        transcript,
        stats,
    })
}
