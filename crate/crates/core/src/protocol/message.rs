use super::ProtocolError;
use crate::linalg::DenseMatrix;
use crate::masks::{BlockSparseMatrix, PlacedBlock, QStrip};
use crate::secagg::{MaskedSlab, PairSeed};
use crate::storage::{read_strip_from, write_strip_to};
use crate::transport::{Frame, MessageType};

/// Payload of one protocol frame.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolMessage {
    /// Seed of the left mask with its shape; the same few bytes for any `m`.
    SeedP { seed: u64, m: u64, block_size: u64 },
    StripQ(QStrip),
    PairSeeds {
        party: u32,
        party_count: u32,
        seeds: Vec<(u32, PairSeed)>,
    },
    MaskedBatch(MaskedSlab),
    /// `Qᵢᵀ·Rᵢ`, sent without its zero blocks.
    MaskedQiR(BlockSparseMatrix),
    /// Masked left singular vectors; `sigma` is empty when not released.
    ResultUSigma { u: DenseMatrix, sigma: Vec<f64> },
    /// `V′ᵀ·Qᵢᵀ·Rᵢ`.
    MaskedViR(DenseMatrix),
    Abort(String),
    /// `P·y`.
    MaskedLabel(Vec<f64>),
    /// Regression weights in the masked column space.
    MaskedWeights(Vec<f64>),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.0.reserve(8 * v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn vector(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        self.f64s(v);
    }

    fn matrix(&mut self, m: &DenseMatrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        self.f64s(m.data());
    }
}

struct Reader<'a> {
    kind: MessageType,
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> ProtocolError {
        ProtocolError::Malformed {
            kind: self.kind,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() < n {
            return Err(self.err(format!("needs {n} more bytes, {} left", self.buf.len())));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, ProtocolError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err("length overflows"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ProtocolError> {
        let bytes = n.checked_mul(8).ok_or_else(|| self.err("length overflows"))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn vector(&mut self) -> Result<Vec<f64>, ProtocolError> {
        let n = self.len()?;
        self.f64s(n)
    }

    fn matrix(&mut self) -> Result<DenseMatrix, ProtocolError> {
        let rows = self.len()?;
        let cols = self.len()?;
        let n = rows.checked_mul(cols).ok_or_else(|| self.err("shape overflows"))?;
        let data = self.f64s(n)?;
        DenseMatrix::new(rows, cols, data).map_err(|e| self.err(e.to_string()))
    }

    fn finish(&self) -> Result<(), ProtocolError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(self.err(format!("{} trailing bytes", self.buf.len())))
        }
    }
}

impl ProtocolMessage {
    pub fn msg_type(&self) -> MessageType {
        match self {
            ProtocolMessage::SeedP { .. } => MessageType::SeedP,
            ProtocolMessage::StripQ(_) => MessageType::StripQ,
            ProtocolMessage::PairSeeds { .. } => MessageType::PairSeeds,
            ProtocolMessage::MaskedBatch(_) => MessageType::MaskedBatch,
            ProtocolMessage::MaskedQiR(_) => MessageType::MaskedQiR,
            ProtocolMessage::ResultUSigma { .. } => MessageType::ResultUSigma,
            ProtocolMessage::MaskedViR(_) => MessageType::MaskedViR,
            ProtocolMessage::Abort(_) => MessageType::Abort,
            ProtocolMessage::MaskedLabel(_) => MessageType::MaskedLabel,
            ProtocolMessage::MaskedWeights(_) => MessageType::MaskedWeights,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        match self {
            ProtocolMessage::SeedP { seed, m, block_size } => {
                w.u64(*seed);
                w.u64(*m);
                w.u64(*block_size);
            }
            ProtocolMessage::StripQ(strip) => {
                write_strip_to(&mut w.0, strip).expect("writing to memory cannot fail");
            }
            ProtocolMessage::PairSeeds {
                party,
                party_count,
                seeds,
            } => {
                w.u32(*party);
                w.u32(*party_count);
                for (peer, seed) in seeds {
                    w.u32(*peer);
                    w.0.extend_from_slice(seed);
                }
            }
            ProtocolMessage::MaskedBatch(slab) => w.0 = slab.to_bytes(),
            ProtocolMessage::MaskedQiR(m) => {
                w.u64(m.rows as u64);
                w.u64(m.cols as u64);
                w.u64(m.blocks.len() as u64);
                for b in &m.blocks {
                    w.u64(b.row as u64);
                    w.u64(b.col as u64);
                    w.matrix(&b.data);
                }
            }
            ProtocolMessage::ResultUSigma { u, sigma } => {
                w.matrix(u);
                w.vector(sigma);
            }
            ProtocolMessage::MaskedViR(m) => w.matrix(m),
            ProtocolMessage::Abort(reason) => w.0.extend_from_slice(reason.as_bytes()),
            ProtocolMessage::MaskedLabel(v) | ProtocolMessage::MaskedWeights(v) => w.vector(v),
        }
        w.0
    }

    pub fn decode(kind: MessageType, payload: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader { kind, buf: payload };
        let msg = match kind {
            MessageType::SeedP => ProtocolMessage::SeedP {
                seed: r.u64()?,
                m: r.u64()?,
                block_size: r.u64()?,
            },
            MessageType::StripQ => {
                let strip = read_strip_from(payload).map_err(|e| r.err(e.to_string()))?;
                r.buf = &[];
                ProtocolMessage::StripQ(strip)
            }
            MessageType::PairSeeds => {
                let party = r.u32()?;
                let party_count = r.u32()?;
                let mut seeds = Vec::new();
                while !r.buf.is_empty() {
                    let peer = r.u32()?;
                    let seed: PairSeed = r.take(32)?.try_into().unwrap();
                    seeds.push((peer, seed));
                }
                ProtocolMessage::PairSeeds {
                    party,
                    party_count,
                    seeds,
                }
            }
            MessageType::MaskedBatch => {
                let slab = MaskedSlab::from_bytes(payload).map_err(|e| r.err(e.to_string()))?;
                r.buf = &[];
                ProtocolMessage::MaskedBatch(slab)
            }
            MessageType::MaskedQiR => {
                let rows = r.len()?;
                let cols = r.len()?;
                let count = r.len()?;
                let mut blocks = Vec::new();
                for _ in 0..count {
                    let row = r.len()?;
                    let col = r.len()?;
                    let data = r.matrix()?;
                    if row + data.rows() > rows || col + data.cols() > cols {
                        return Err(r.err("placed block out of range"));
                    }
                    blocks.push(PlacedBlock { row, col, data });
                }
                ProtocolMessage::MaskedQiR(BlockSparseMatrix { rows, cols, blocks })
            }
            MessageType::ResultUSigma => ProtocolMessage::ResultUSigma {
                u: r.matrix()?,
                sigma: r.vector()?,
            },
            MessageType::MaskedViR => ProtocolMessage::MaskedViR(r.matrix()?),
            MessageType::Abort => {
                r.buf = &[];
                ProtocolMessage::Abort(String::from_utf8_lossy(payload).into_owned())
            }
            MessageType::MaskedLabel => ProtocolMessage::MaskedLabel(r.vector()?),
            MessageType::MaskedWeights => ProtocolMessage::MaskedWeights(r.vector()?),
            MessageType::Hello => return Err(r.err("handshake frame inside a session")),
        };
        r.finish()?;
        Ok(msg)
    }

    pub fn into_frame(self, session_id: u64, step: u16) -> Frame {
        Frame::new(session_id, step, self.msg_type(), self.encode())
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, ProtocolError> {
        Self::decode(frame.msg_type, &frame.payload)
    }
}
