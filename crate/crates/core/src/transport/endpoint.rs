use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::frame::{Frame, MessageType};
use super::shaper::{ShapedLink, ShaperConfig};
use super::TransportError;

/// Role identity on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    Ta,
    Csp,
    User(u32),
}

impl PartyId {
    pub fn to_bytes(self) -> [u8; 5] {
        let (kind, idx) = match self {
            PartyId::Ta => (0u8, 0u32),
            PartyId::Csp => (1, 0),
            PartyId::User(i) => (2, i),
        };
        let mut out = [0u8; 5];
        out[0] = kind;
        out[1..].copy_from_slice(&idx.to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, TransportError> {
        if b.len() != 5 {
            return Err(TransportError::MalformedFrame("party id length".into()));
        }
        let idx = u32::from_le_bytes(b[1..5].try_into().unwrap());
        match b[0] {
            0 => Ok(PartyId::Ta),
            1 => Ok(PartyId::Csp),
            2 => Ok(PartyId::User(idx)),
            k => Err(TransportError::MalformedFrame(format!("party kind {k}"))),
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Ta => write!(f, "ta"),
            PartyId::Csp => write!(f, "csp"),
            PartyId::User(i) => write!(f, "user{i}"),
        }
    }
}

/// Event delivered to an endpoint's inbox.
#[derive(Debug)]
pub(crate) enum Incoming {
    Frame(PartyId, Vec<u8>),
    Closed(PartyId),
    Failed(PartyId, TransportError),
}

/// Outgoing half of a connection to one peer.
pub trait Link: Send {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError>;
}

struct MemLink {
    me: PartyId,
    to: Sender<Incoming>,
}

impl Link for MemLink {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        self.to
            .send(Incoming::Frame(self.me, bytes.to_vec()))
            .map_err(|_| TransportError::Disconnected(format!("peer of {} is gone", self.me)))
    }
}

impl Drop for MemLink {
    fn drop(&mut self) {
        let _ = self.to.send(Incoming::Closed(self.me));
    }
}

/// Frame and byte counts per peer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficStats {
    pub sent: BTreeMap<PartyId, (u64, u64)>,
    pub received: BTreeMap<PartyId, (u64, u64)>,
}

impl TrafficStats {
    pub fn bytes_sent(&self) -> u64 {
        self.sent.values().map(|v| v.1).sum()
    }

    pub fn bytes_received(&self) -> u64 {
        self.received.values().map(|v| v.1).sum()
    }
}

/// A role's connections: one outgoing link per peer and a shared inbox.
///
/// Frames from one peer arrive in send order. `recv_from` buffers frames from
/// other peers, so a role that reads peers in a fixed order sees a
/// deterministic sequence regardless of thread timing.
pub struct Endpoint {
    me: PartyId,
    inbox: Receiver<Incoming>,
    links: BTreeMap<PartyId, Box<dyn Link>>,
    pending: HashMap<PartyId, VecDeque<Vec<u8>>>,
    failed: HashMap<PartyId, TransportError>,
    closed: BTreeSet<PartyId>,
    stats: TrafficStats,
    timeout: Option<Duration>,
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Endpoint")
            .field("me", &self.me)
            .field("peers", &self.links.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Endpoint {
    pub(crate) fn from_parts(
        me: PartyId,
        inbox: Receiver<Incoming>,
        links: BTreeMap<PartyId, Box<dyn Link>>,
    ) -> Self {
        Self {
            me,
            inbox,
            links,
            pending: HashMap::new(),
            failed: HashMap::new(),
            closed: BTreeSet::new(),
            stats: TrafficStats::default(),
            timeout: Some(Duration::from_secs(600)),
        }
    }

    pub fn me(&self) -> PartyId {
        self.me
    }

    pub fn peers(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.links.keys().copied()
    }

    pub fn stats(&self) -> &TrafficStats {
        &self.stats
    }

    /// `None` waits forever.
    pub fn set_timeout(&mut self, timeout: Option<Duration>) {
        self.timeout = timeout;
    }

    /// Wraps every outgoing link in a bandwidth/latency shaper.
    pub fn shape(mut self, cfg: ShaperConfig) -> Self {
        if cfg.is_passthrough() {
            return self;
        }
        let links = std::mem::take(&mut self.links);
        self.links = links
            .into_iter()
            .map(|(p, l)| (p, Box::new(ShapedLink::new(l, cfg)) as Box<dyn Link>))
            .collect();
        self
    }

    pub fn send(&mut self, to: PartyId, frame: &Frame) -> Result<(), TransportError> {
        let link = self
            .links
            .get_mut(&to)
            .ok_or_else(|| TransportError::UnknownPeer(to.to_string()))?;
        link.send_bytes(&frame.encode())?;
        let e = self.stats.sent.entry(to).or_default();
        e.0 += 1;
        e.1 += frame.wire_len() as u64;
        Ok(())
    }

    /// Next frame from `peer`. An `Abort` from any other peer is returned
    /// immediately instead, tagged with its sender.
    pub fn recv_from(&mut self, peer: PartyId) -> Result<(PartyId, Frame), TransportError> {
        let deadline = self.timeout.map(|t| Instant::now() + t);
        loop {
            if let Some(bytes) = self.pending.get_mut(&peer).and_then(|q| q.pop_front()) {
                return self.accept(peer, bytes);
            }
            if let Some(e) = self.failed.remove(&peer) {
                return Err(e);
            }
            if self.closed.contains(&peer) {
                return Err(TransportError::Disconnected(format!("{peer} closed the connection")));
            }
            let event = match deadline {
                Some(d) => {
                    let left = d.saturating_duration_since(Instant::now());
                    match self.inbox.recv_timeout(left) {
                        Ok(ev) => ev,
                        Err(RecvTimeoutError::Timeout) => {
                            return Err(TransportError::Timeout(format!("{} waiting for {peer}", self.me)))
                        }
                        Err(RecvTimeoutError::Disconnected) => {
                            return Err(TransportError::Disconnected(format!("inbox of {} closed", self.me)))
                        }
                    }
                }
                None => self
                    .inbox
                    .recv()
                    .map_err(|_| TransportError::Disconnected(format!("inbox of {} closed", self.me)))?,
            };
            match event {
                Incoming::Frame(from, bytes) if from == peer => return self.accept(from, bytes),
                Incoming::Frame(from, bytes) => {
                    if is_abort(&bytes) {
                        return self.accept(from, bytes);
                    }
                    self.pending.entry(from).or_default().push_back(bytes);
                }
                Incoming::Closed(from) => {
                    self.closed.insert(from);
                }
                Incoming::Failed(from, e) => {
                    self.failed.insert(from, e);
                }
            }
        }
    }

    fn accept(&mut self, from: PartyId, bytes: Vec<u8>) -> Result<(PartyId, Frame), TransportError> {
        let frame = Frame::decode(&bytes)?;
        let e = self.stats.received.entry(from).or_default();
        e.0 += 1;
        e.1 += bytes.len() as u64;
        Ok((from, frame))
    }

    /// True if any frame has arrived and not yet been consumed.
    pub fn has_unread(&mut self) -> bool {
        while let Ok(ev) = self.inbox.try_recv() {
            match ev {
                Incoming::Frame(from, bytes) => self.pending.entry(from).or_default().push_back(bytes),
                Incoming::Closed(from) => {
                    self.closed.insert(from);
                }
                Incoming::Failed(from, e) => {
                    self.failed.insert(from, e);
                }
            }
        }
        self.pending.values().any(|q| !q.is_empty())
    }
}

fn is_abort(bytes: &[u8]) -> bool {
    bytes.len() >= 18 && u16::from_le_bytes([bytes[16], bytes[17]]) == MessageType::Abort.code()
}

/// Fully connected in-memory network over channels.
pub fn memory_network(parties: &[PartyId]) -> BTreeMap<PartyId, Endpoint> {
    let mut senders = BTreeMap::new();
    let mut receivers = BTreeMap::new();
    for &p in parties {
        let (tx, rx) = channel();
        senders.insert(p, tx);
        receivers.insert(p, rx);
    }
    parties
        .iter()
        .map(|&me| {
            let links: BTreeMap<PartyId, Box<dyn Link>> = parties
                .iter()
                .filter(|&&p| p != me)
                .map(|&p| {
                    (
                        p,
                        Box::new(MemLink {
                            me,
                            to: senders[&p].clone(),
                        }) as Box<dyn Link>,
                    )
                })
                .collect();
            let inbox = receivers.remove(&me).expect("unique parties");
            (me, Endpoint::from_parts(me, inbox, links))
        })
        .collect()
}
