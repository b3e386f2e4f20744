//! Bit-exact wire format. Every integer is big-endian.
//!
//! ```text
//! header   type:u8 | session_id:u32 | t:u64 | length:u32     (17 bytes)
//! 0x01 KeySetupRequest    count:u32 | count x hostname[30]
//! 0x02 ContainerBatch     count:u32 | count x (src[30] | dst[30] | len:u32 | payload)
//! 0x03 MpcInputRequest    (empty; t in header)
//! 0x04 MpcInputResponse   d:u32 | d x word:u64 | masked_count:u64
//! 0x05 GlobalModelUpdate  d:u32 | d x binary32
//! 0x06 Register           hostname[30] | has_gpu:u8 | load:u8 | kinds:u8 | kinds x (len:u8 | utf8)
//! 0x07 Subscribe          hostname[30]
//! 0x08 Unsubscribe        hostname[30]
//! 0x09 Abort              reason:u8
//! ```

use std::fmt;

use thiserror::Error;

use super::registry::{Capabilities, NfProfile};
use crate::crypto::{Hostname, HOSTNAME_LEN};
use crate::sigma::{Container, SessionError};

pub const HEADER_LEN: usize = 17;
pub const COUNT_LEN: usize = 4;
pub const CONTAINER_OVERHEAD: usize = 2 * HOSTNAME_LEN + 4;
pub const WORD_LEN: usize = 8;
pub const FLOAT_LEN: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame shorter than its header")]
    Truncated,
    #[error("length field says {declared} bytes but {actual} follow")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("expected {expected}, got {got}")]
    UnexpectedType { expected: MsgType, got: MsgType },
    #[error("malformed {what} payload: {detail}")]
    Payload { what: &'static str, detail: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MsgType {
    KeySetupRequest = 0x01,
    ContainerBatch = 0x02,
    MpcInputRequest = 0x03,
    MpcInputResponse = 0x04,
    GlobalModelUpdate = 0x05,
    Register = 0x06,
    Subscribe = 0x07,
    Unsubscribe = 0x08,
    Abort = 0x09,
}

impl MsgType {
    pub fn from_code(code: u8) -> Result<Self, WireError> {
        Ok(match code {
            0x01 => Self::KeySetupRequest,
            0x02 => Self::ContainerBatch,
            0x03 => Self::MpcInputRequest,
            0x04 => Self::MpcInputResponse,
            0x05 => Self::GlobalModelUpdate,
            0x06 => Self::Register,
            0x07 => Self::Subscribe,
            0x08 => Self::Unsubscribe,
            0x09 => Self::Abort,
            other => return Err(WireError::UnknownType(other)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::KeySetupRequest => "key_setup_request",
            Self::ContainerBatch => "container_batch",
            Self::MpcInputRequest => "mpc_input_request",
            Self::MpcInputResponse => "mpc_input_response",
            Self::GlobalModelUpdate => "global_model_update",
            Self::Register => "register",
            Self::Subscribe => "subscribe",
            Self::Unsubscribe => "unsubscribe",
            Self::Abort => "abort",
        }
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One-byte abort reason codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AbortReason {
    Replay = 1,
    BelowThreshold = 2,
    NotMember = 3,
    BadSignature = 4,
    BadMac = 5,
    UnknownPeer = 6,
    UnexpectedContainer = 7,
    MissingContainer = 8,
    Malformed = 9,
    MissingSecret = 10,
    Timeout = 11,
    NoData = 12,
    SessionMismatch = 13,
    Protocol = 14,
    Masking = 15,
}

impl AbortReason {
    pub fn from_code(code: u8) -> Result<Self, WireError> {
        use AbortReason::*;
        Ok(match code {
            1 => Replay,
            2 => BelowThreshold,
            3 => NotMember,
            4 => BadSignature,
            5 => BadMac,
            6 => UnknownPeer,
            7 => UnexpectedContainer,
            8 => MissingContainer,
            9 => Malformed,
            10 => MissingSecret,
            11 => Timeout,
            12 => NoData,
            13 => SessionMismatch,
            14 => Protocol,
            15 => Masking,
            other => {
                return Err(WireError::Payload {
                    what: "abort",
                    detail: format!("reason code {other}"),
                })
            }
        })
    }

    pub fn name(&self) -> &'static str {
        use AbortReason::*;
        match self {
            Replay => "replay",
            BelowThreshold => "below-threshold",
            NotMember => "not-member",
            BadSignature => "bad-signature",
            BadMac => "bad-mac",
            UnknownPeer => "unknown-peer",
            UnexpectedContainer => "unexpected-container",
            MissingContainer => "missing-container",
            Malformed => "malformed",
            MissingSecret => "missing-secret",
            Timeout => "timeout",
            NoData => "no-data",
            SessionMismatch => "session-mismatch",
            Protocol => "protocol",
            Masking => "masking",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<&SessionError> for AbortReason {
    fn from(e: &SessionError) -> Self {
        use crate::crypto::CryptoError;
        match e {
            SessionError::Replay { .. } => Self::Replay,
            SessionError::BelowThreshold { .. } => Self::BelowThreshold,
            SessionError::NotMember(_) | SessionError::DuplicateMember(_) => Self::NotMember,
            SessionError::BadSignature(_) => Self::BadSignature,
            SessionError::BadMac(_) => Self::BadMac,
            SessionError::UnexpectedContainer(_)
            | SessionError::DuplicateHandshake(_)
            | SessionError::ForgedSource { .. }
            | SessionError::DuplicateBatch(_) => Self::UnexpectedContainer,
            SessionError::MissingContainer(_) | SessionError::BarrierIncomplete(_) => {
                Self::MissingContainer
            }
            SessionError::MissingSecret(_) => Self::MissingSecret,
            SessionError::NoSession | SessionError::SessionMismatch => Self::SessionMismatch,
            SessionError::Malformed(_) => Self::Malformed,
            SessionError::Protocol(_) => Self::Protocol,
            SessionError::Crypto(CryptoError::UnknownHost(_) | CryptoError::BadCertificate(_)) => {
                Self::UnknownPeer
            }
            SessionError::Crypto(_) => Self::Malformed,
        }
    }
}

/// A framed message: header fields plus raw payload bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub session_id: u32,
    pub t: u64,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(msg_type: MsgType, session_id: u32, t: u64, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            session_id,
            t,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.extend_from_slice(&self.t.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, WireError> {
        if frame.len() < HEADER_LEN {
            return Err(WireError::Truncated);
        }
        let msg_type = MsgType::from_code(frame[0])?;
        let session_id = u32::from_be_bytes(frame[1..5].try_into().expect("4 bytes"));
        let t = u64::from_be_bytes(frame[5..13].try_into().expect("8 bytes"));
        let declared = u32::from_be_bytes(frame[13..17].try_into().expect("4 bytes")) as usize;
        let actual = frame.len() - HEADER_LEN;
        if declared != actual {
            return Err(WireError::LengthMismatch { declared, actual });
        }
        Ok(Self {
            msg_type,
            session_id,
            t,
            payload: frame[HEADER_LEN..].to_vec(),
        })
    }

    pub fn expect(&self, ty: MsgType) -> Result<&[u8], WireError> {
        if self.msg_type != ty {
            return Err(WireError::UnexpectedType {
                expected: ty,
                got: self.msg_type,
            });
        }
        Ok(&self.payload)
    }
}

/// Frame length as read from a header prefix, for stream transports.
pub fn frame_len_from_header(header: &[u8; HEADER_LEN]) -> usize {
    HEADER_LEN + u32::from_be_bytes(header[13..17].try_into().expect("4 bytes")) as usize
}

struct Reader<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, what }
    }

    fn err(&self, detail: impl Into<String>) -> WireError {
        WireError::Payload {
            what: self.what,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(self.err(format!("need {n} bytes, have {}", self.buf.len())));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn hostname(&mut self) -> Result<Hostname, WireError> {
        let raw = self.take(HOSTNAME_LEN)?;
        Hostname::from_bytes(raw).map_err(|e| self.err(e.to_string()))
    }

    /// Bounds a declared element count by what the remaining bytes can hold.
    fn count(&mut self, min_elem: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if min_elem > 0 && n > self.buf.len() / min_elem {
            return Err(self.err(format!(
                "count {n} exceeds remaining {} bytes",
                self.buf.len()
            )));
        }
        Ok(n)
    }

    fn finish(self) -> Result<(), WireError> {
        if !self.buf.is_empty() {
            return Err(self.err(format!("{} trailing bytes", self.buf.len())));
        }
        Ok(())
    }
}

pub fn encode_key_setup(selection: &[Hostname]) -> Vec<u8> {
    let mut out = Vec::with_capacity(COUNT_LEN + selection.len() * HOSTNAME_LEN);
    out.extend_from_slice(&(selection.len() as u32).to_be_bytes());
    for h in selection {
        out.extend_from_slice(h.as_bytes());
    }
    out
}

pub fn decode_key_setup(payload: &[u8]) -> Result<Vec<Hostname>, WireError> {
    let mut r = Reader::new(payload, "key setup request");
    let n = r.count(HOSTNAME_LEN)?;
    let hosts = (0..n)
        .map(|_| r.hostname())
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(hosts)
}

pub fn encode_container_batch(batch: &[Container]) -> Vec<u8> {
    let size = COUNT_LEN
        + batch
            .iter()
            .map(|c| CONTAINER_OVERHEAD + c.payload.len())
            .sum::<usize>();
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&(batch.len() as u32).to_be_bytes());
    for c in batch {
        out.extend_from_slice(c.src.as_bytes());
        out.extend_from_slice(c.dst.as_bytes());
        out.extend_from_slice(&(c.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&c.payload);
    }
    out
}

pub fn decode_container_batch(payload: &[u8]) -> Result<Vec<Container>, WireError> {
    let mut r = Reader::new(payload, "container batch");
    let n = r.count(CONTAINER_OVERHEAD)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let src = r.hostname()?;
        let dst = r.hostname()?;
        let len = r.u32()? as usize;
        let payload = r.take(len)?.to_vec();
        out.push(Container { src, dst, payload });
    }
    r.finish()?;
    Ok(out)
}

pub fn encode_mpc_response(vector: &[u64], masked_count: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(COUNT_LEN + WORD_LEN * (vector.len() + 1));
    out.extend_from_slice(&(vector.len() as u32).to_be_bytes());
    for w in vector {
        out.extend_from_slice(&w.to_be_bytes());
    }
    out.extend_from_slice(&masked_count.to_be_bytes());
    out
}

pub fn decode_mpc_response(payload: &[u8]) -> Result<(Vec<u64>, u64), WireError> {
    let mut r = Reader::new(payload, "mpc input response");
    let d = r.count(WORD_LEN)?;
    let vector = (0..d).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let count = r.u64()?;
    r.finish()?;
    Ok((vector, count))
}

pub fn encode_global_update(weights: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(COUNT_LEN + FLOAT_LEN * weights.len());
    out.extend_from_slice(&(weights.len() as u32).to_be_bytes());
    for w in weights {
        out.extend_from_slice(&w.to_be_bytes());
    }
    out
}

pub fn decode_global_update(payload: &[u8]) -> Result<Vec<f32>, WireError> {
    let mut r = Reader::new(payload, "global model update");
    let d = r.count(FLOAT_LEN)?;
    let w = (0..d)
        .map(|_| {
            r.take(FLOAT_LEN)
                .map(|b| f32::from_be_bytes(b.try_into().expect("4 bytes")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(w)
}

pub fn encode_register(profile: &NfProfile) -> Vec<u8> {
    let caps = &profile.capabilities;
    let mut out = Vec::with_capacity(HOSTNAME_LEN + 3);
    out.extend_from_slice(profile.hostname.as_bytes());
    out.push(caps.has_gpu as u8);
    out.push(caps.traffic_load);
    out.push(caps.supported_model_kinds.len() as u8);
    for k in &caps.supported_model_kinds {
        out.push(k.len() as u8);
        out.extend_from_slice(k.as_bytes());
    }
    out
}

pub fn decode_register(payload: &[u8]) -> Result<NfProfile, WireError> {
    let mut r = Reader::new(payload, "register");
    let hostname = r.hostname()?;
    let has_gpu = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(r.err(format!("gpu flag {other}"))),
    };
    let traffic_load = r.u8()?;
    if traffic_load > 100 {
        return Err(r.err(format!("traffic load {traffic_load} > 100")));
    }
    let kinds = r.u8()? as usize;
    let mut supported_model_kinds = Vec::with_capacity(kinds);
    for _ in 0..kinds {
        let len = r.u8()? as usize;
        let raw = r.take(len)?;
        supported_model_kinds
            .push(String::from_utf8(raw.to_vec()).map_err(|e| r.err(e.to_string()))?);
    }
    r.finish()?;
    Ok(NfProfile {
        hostname,
        capabilities: Capabilities {
            has_gpu,
            supported_model_kinds,
            traffic_load,
        },
    })
}

pub fn encode_hostname(h: &Hostname) -> Vec<u8> {
    h.as_bytes().to_vec()
}

pub fn decode_hostname(payload: &[u8]) -> Result<Hostname, WireError> {
    let mut r = Reader::new(payload, "hostname");
    let h = r.hostname()?;
    r.finish()?;
    Ok(h)
}

pub fn decode_abort(payload: &[u8]) -> Result<AbortReason, WireError> {
    let mut r = Reader::new(payload, "abort");
    let code = r.u8()?;
    r.finish()?;
    AbortReason::from_code(code)
}
