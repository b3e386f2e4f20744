//! SIGMA key establishment between NF pairs, tunnelled through the NWDAF.
//!
//! Role convention: within a selection list the higher-positioned NF of each
//! pair initiates. Each NF therefore sends msg1 to every lower-positioned
//! peer it has no cached secret with. The three legs travel as batched
//! containers and the NWDAF releases a leg only once every selected NF has
//! answered.
//!
//! Key derivation from `g^xy`:
//! * MAC key `K = PRF(g^xy, "mac-key", session_id)`, 16 bytes
//! * cached pair secret `PRF(g^xy, "pair-secret", "")`
//!
//! Secrets established in a session become part of the cache only once the
//! NF accepts the round's MPC input request, so an aborted session never
//! leaves the two endpoints with different caches.

mod endpoint;
mod messages;
mod router;
mod state;

pub use endpoint::{HandshakePhase, HandshakeState, Role, RoundKeys, SigmaEndpoint};
pub use messages::{transcript, Container, Msg1, Msg2, Msg3, MSG1_LEN, MSG2_LEN, MSG3_LEN};
pub use router::{begin_session, ContainerRouter};
pub use state::{PairwiseSecret, ReplayCounter, SelectionList};

use thiserror::Error;

use crate::crypto::{CryptoError, Hostname};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("round {t} is not fresh (last accepted {last})")]
    Replay { t: u64, last: u64 },
    #[error("selection list of {size} is below threshold {threshold}")]
    BelowThreshold { size: usize, threshold: usize },
    #[error("{0} appears twice in the selection list")]
    DuplicateMember(Hostname),
    #[error("{0} is not a member of the selection list")]
    NotMember(Hostname),
    #[error("second handshake with {0} in one session")]
    DuplicateHandshake(Hostname),
    #[error("unexpected container from {0}")]
    UnexpectedContainer(Hostname),
    #[error("expected container from {0} is missing")]
    MissingContainer(Hostname),
    #[error("signature from {0} does not verify")]
    BadSignature(Hostname),
    #[error("MAC from {0} does not verify")]
    BadMac(Hostname),
    #[error("no pair secret with {0}")]
    MissingSecret(Hostname),
    #[error("container claims source {claimed} but was sent by {sender}")]
    ForgedSource { claimed: Hostname, sender: Hostname },
    #[error("{0} already delivered a batch for this leg")]
    DuplicateBatch(Hostname),
    #[error("barrier incomplete, waiting on {0:?}")]
    BarrierIncomplete(Vec<Hostname>),
    #[error("no session in progress")]
    NoSession,
    #[error("session id or round does not match the active session")]
    SessionMismatch,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
