use super::TransportError;

pub const MAGIC: [u8; 4] = *b"FSVD";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 26;

/// Wire code of every frame kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u16)]
pub enum MessageType {
    SeedP = 1,
    StripQ = 2,
    PairSeeds = 3,
    MaskedBatch = 4,
    MaskedQiR = 5,
    ResultUSigma = 6,
    MaskedViR = 7,
    Abort = 8,
    MaskedLabel = 9,
    MaskedWeights = 10,
    /// Connection handshake; never seen by protocol roles.
    Hello = 11,
}

impl MessageType {
    pub const ALL: [MessageType; 11] = [
        MessageType::SeedP,
        MessageType::StripQ,
        MessageType::PairSeeds,
        MessageType::MaskedBatch,
        MessageType::MaskedQiR,
        MessageType::ResultUSigma,
        MessageType::MaskedViR,
        MessageType::Abort,
        MessageType::MaskedLabel,
        MessageType::MaskedWeights,
        MessageType::Hello,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::SeedP => "SeedP",
            MessageType::StripQ => "StripQ",
            MessageType::PairSeeds => "PairSeeds",
            MessageType::MaskedBatch => "MaskedBatch",
            MessageType::MaskedQiR => "MaskedQiR",
            MessageType::ResultUSigma => "ResultUSigma",
            MessageType::MaskedViR => "MaskedViR",
            MessageType::Abort => "Abort",
            MessageType::MaskedLabel => "MaskedLabel",
            MessageType::MaskedWeights => "MaskedWeights",
            MessageType::Hello => "Hello",
        }
    }
}

/// `magic | version u16 | session u64 | step u16 | type u16 | len u64 | payload`,
/// integers little-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub session_id: u64,
    pub step: u16,
    pub msg_type: MessageType,
    pub payload: Vec<u8>,
}

/// Fixed-size header, decoded before the payload is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub session_id: u64,
    pub step: u16,
    pub msg_type: MessageType,
    pub payload_len: u64,
}

impl FrameHeader {
    pub fn decode(bytes: &[u8; HEADER_LEN]) -> Result<Self, TransportError> {
        if bytes[0..4] != MAGIC {
            return Err(TransportError::MalformedFrame("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(TransportError::MalformedFrame(format!("unsupported version {version}")));
        }
        let session_id = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let step = u16::from_le_bytes([bytes[14], bytes[15]]);
        let code = u16::from_le_bytes([bytes[16], bytes[17]]);
        let msg_type = MessageType::from_code(code)
            .ok_or_else(|| TransportError::MalformedFrame(format!("unknown message type {code}")))?;
        let payload_len = u64::from_le_bytes(bytes[18..26].try_into().unwrap());
        Ok(Self {
            session_id,
            step,
            msg_type,
            payload_len,
        })
    }
}

impl Frame {
    pub fn new(session_id: u64, step: u16, msg_type: MessageType, payload: Vec<u8>) -> Self {
        Self {
            session_id,
            step,
            msg_type,
            payload,
        }
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn header_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6..14].copy_from_slice(&self.session_id.to_le_bytes());
        h[14..16].copy_from_slice(&self.step.to_le_bytes());
        h[16..18].copy_from_slice(&self.msg_type.code().to_le_bytes());
        h[18..26].copy_from_slice(&(self.payload.len() as u64).to_le_bytes());
        h
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.header_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        if bytes.len() < HEADER_LEN {
            return Err(TransportError::MalformedFrame(format!("{} bytes, header needs 26", bytes.len())));
        }
        let header = FrameHeader::decode(bytes[..HEADER_LEN].try_into().unwrap())?;
        let body = &bytes[HEADER_LEN..];
        if body.len() as u64 != header.payload_len {
            return Err(TransportError::MalformedFrame(format!(
                "payload length {} but header says {}",
                body.len(),
                header.payload_len
            )));
        }
        Ok(Self {
            session_id: header.session_id,
            step: header.step,
            msg_type: header.msg_type,
            payload: body.to_vec(),
        })
    }
}
