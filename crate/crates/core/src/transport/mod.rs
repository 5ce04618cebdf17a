//! Versioned frames over in-memory channels or TCP, with an optional link shaper.

mod endpoint;
mod frame;
mod shaper;
mod tcp;

pub use endpoint::{memory_network, Endpoint, Link, PartyId, TrafficStats};
pub use frame::{Frame, FrameHeader, MessageType, HEADER_LEN, MAGIC, VERSION};
pub use shaper::ShaperConfig;
pub use tcp::TcpEndpointBuilder;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("disconnected: {0}")]
    Disconnected(String),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("no link to {0}")]
    UnknownPeer(String),
    #[error("invalid transport configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}
