//! The federated SVD session: mask setup by the trusted authority, secure
//! aggregation and factorization at the computation server, and unmasking
//! at each user.

mod config;
mod message;
mod ops;
mod roles;
mod session;

pub use config::{SessionConfig, Task, LR_RCOND};
pub use message::ProtocolMessage;
pub use ops::{
    csp_collect, csp_factorize, ta_init, user_mask_data, user_recover_u, user_recover_v,
    recover_v_roundtrip, strip_mul_vec, Collector, CspFactors, TaSetup,
};
pub use roles::{
    run_csp, run_ta, run_user, CspOutput, Direction, FedSvdResult, RoleChannel, TaOutput,
    TranscriptEntry, UserInput,
};
pub use session::{
    run_fedsvd, run_fedsvd_on, tcp_loopback_network, tcp_role_endpoint, SessionOutcome,
};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::masks::MaskError;
use crate::secagg::SecAggError;
use crate::storage::StorageError;
use crate::transport::{MessageType, PartyId, TransportError};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    SecAgg(#[from] SecAggError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("session aborted by {by}: {reason}")]
    Aborted { by: PartyId, reason: String },
    #[error("expected {expected:?} from {from}, got {got:?}")]
    Unexpected {
        from: PartyId,
        expected: MessageType,
        got: MessageType,
    },
    #[error("malformed {kind:?} payload: {reason}")]
    Malformed { kind: MessageType, reason: String },
    #[error("role {0} did not finish")]
    RoleFailed(String),
}
