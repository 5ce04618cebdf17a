use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::endpoint::{Endpoint, Incoming, Link, PartyId};
use super::frame::{Frame, FrameHeader, MessageType, HEADER_LEN};
use super::TransportError;

struct TcpLink {
    stream: TcpStream,
}

impl Link for TcpLink {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        self.stream.write_all(bytes).map_err(io_err)?;
        self.stream.flush().map_err(io_err)
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Write);
    }
}

fn io_err(e: std::io::Error) -> TransportError {
    match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => TransportError::Timeout(e.to_string()),
        ErrorKind::UnexpectedEof
        | ErrorKind::ConnectionReset
        | ErrorKind::ConnectionAborted
        | ErrorKind::BrokenPipe => TransportError::Disconnected(e.to_string()),
        _ => TransportError::Io(e.to_string()),
    }
}

/// Reads one whole frame; `Ok(None)` on a clean end of stream.
fn read_frame_bytes(stream: &mut TcpStream) -> Result<Option<Vec<u8>>, TransportError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match stream.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(TransportError::Disconnected("stream ended inside a header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(io_err(e)),
        }
    }
    let h = FrameHeader::decode(&header)?;
    let len = usize::try_from(h.payload_len)
        .map_err(|_| TransportError::MalformedFrame("payload length overflows".into()))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + len);
    bytes.extend_from_slice(&header);
    bytes.resize(HEADER_LEN + len, 0);
    stream.read_exact(&mut bytes[HEADER_LEN..]).map_err(io_err)?;
    Ok(Some(bytes))
}

fn spawn_reader(peer: PartyId, mut stream: TcpStream, tx: Sender<Incoming>) {
    thread::spawn(move || loop {
        match read_frame_bytes(&mut stream) {
            Ok(Some(bytes)) => {
                if tx.send(Incoming::Frame(peer, bytes)).is_err() {
                    return;
                }
            }
            Ok(None) => {
                let _ = tx.send(Incoming::Closed(peer));
                return;
            }
            Err(e) => {
                let _ = tx.send(Incoming::Failed(peer, e));
                return;
            }
        }
    });
}

fn hello(me: PartyId) -> Vec<u8> {
    Frame::new(0, 0, MessageType::Hello, me.to_bytes().to_vec()).encode()
}

fn read_hello(stream: &mut TcpStream) -> Result<PartyId, TransportError> {
    let bytes = read_frame_bytes(stream)?
        .ok_or_else(|| TransportError::Disconnected("closed during handshake".into()))?;
    let f = Frame::decode(&bytes)?;
    if f.msg_type != MessageType::Hello {
        return Err(TransportError::MalformedFrame(format!(
            "expected Hello, got {}",
            f.msg_type.name()
        )));
    }
    PartyId::from_bytes(&f.payload)
}

/// Assembles an [`Endpoint`] from accepted and dialed TCP connections.
pub struct TcpEndpointBuilder {
    me: PartyId,
    tx: Sender<Incoming>,
    rx: Receiver<Incoming>,
    links: BTreeMap<PartyId, Box<dyn Link>>,
}

impl TcpEndpointBuilder {
    pub fn new(me: PartyId) -> Self {
        let (tx, rx) = channel();
        Self {
            me,
            tx,
            rx,
            links: BTreeMap::new(),
        }
    }

    fn register(&mut self, peer: PartyId, stream: TcpStream) -> Result<(), TransportError> {
        stream.set_nodelay(true).map_err(io_err)?;
        let reader = stream.try_clone().map_err(io_err)?;
        spawn_reader(peer, reader, self.tx.clone());
        if self.links.insert(peer, Box::new(TcpLink { stream })).is_some() {
            return Err(TransportError::InvalidConfig(format!("two connections from {peer}")));
        }
        Ok(())
    }

    /// Accepts `count` peers on `listener`, each identified by its handshake.
    pub fn accept(&mut self, listener: &TcpListener, count: usize, timeout: Duration) -> Result<Vec<PartyId>, TransportError> {
        let deadline = Instant::now() + timeout;
        listener.set_nonblocking(true).map_err(io_err)?;
        let mut peers = Vec::with_capacity(count);
        while peers.len() < count {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false).map_err(io_err)?;
                    stream
                        .set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1))))
                        .map_err(io_err)?;
                    let peer = read_hello(&mut stream)?;
                    stream.write_all(&hello(self.me)).map_err(io_err)?;
                    stream.set_read_timeout(None).map_err(io_err)?;
                    self.register(peer, stream)?;
                    peers.push(peer);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Timeout(format!(
                            "{} accepted {} of {count} peers",
                            self.me,
                            peers.len()
                        )));
                    }
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(io_err(e)),
            }
        }
        Ok(peers)
    }

    /// Dials `addr`, retrying until `timeout` while the peer is not yet listening.
    pub fn connect(&mut self, peer: PartyId, addr: SocketAddr, timeout: Duration) -> Result<(), TransportError> {
        let deadline = Instant::now() + timeout;
        let mut stream = loop {
            match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
                Ok(s) => break s,
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Timeout(format!("connect to {peer} at {addr}: {e}")));
                    }
                    thread::sleep(Duration::from_millis(10));
                }
            }
        };
        stream.write_all(&hello(self.me)).map_err(io_err)?;
        stream
            .set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(100))))
            .map_err(io_err)?;
        let answered = read_hello(&mut stream)?;
        if answered != peer {
            return Err(TransportError::InvalidConfig(format!(
                "expected {peer} at {addr}, found {answered}"
            )));
        }
        stream.set_read_timeout(None).map_err(io_err)?;
        self.register(peer, stream)
    }

    pub fn build(self) -> Endpoint {
        Endpoint::from_parts(self.me, self.rx, self.links)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_roundtrip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let mut b = TcpEndpointBuilder::new(PartyId::Csp);
            let peers = b.accept(&listener, 1, Duration::from_secs(10)).unwrap();
            assert_eq!(peers, vec![PartyId::User(3)]);
            let mut ep = b.build();
            let mut got = Vec::new();
            for _ in 0..10 {
                got.push(ep.recv_from(PartyId::User(3)).unwrap().1.payload[0]);
            }
            ep.send(PartyId::User(3), &Frame::new(1, 3, MessageType::ResultUSigma, vec![])).unwrap();
            got
        });
        let mut b = TcpEndpointBuilder::new(PartyId::User(3));
        b.connect(PartyId::Csp, addr, Duration::from_secs(10)).unwrap();
        let mut ep = b.build();
        for i in 1..=10u8 {
            ep.send(PartyId::Csp, &Frame::new(1, 2, MessageType::MaskedBatch, vec![i; 100])).unwrap();
        }
        let (_, f) = ep.recv_from(PartyId::Csp).unwrap();
        assert_eq!(f.msg_type, MessageType::ResultUSigma);
        assert_eq!(server.join().unwrap(), (1..=10).collect::<Vec<u8>>());
    }

    #[test]
    fn wrong_peer_identity_rejected() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let mut b = TcpEndpointBuilder::new(PartyId::Ta);
            b.accept(&listener, 1, Duration::from_secs(10)).map(|_| ())
        });
        let mut b = TcpEndpointBuilder::new(PartyId::User(0));
        assert!(b.connect(PartyId::Csp, addr, Duration::from_secs(10)).is_err());
        let _ = server.join();
    }
}
