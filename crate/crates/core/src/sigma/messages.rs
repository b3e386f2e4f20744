use crate::crypto::{DhPublic, Hostname, Signature, DH_PUBLIC_LEN, MAC_TAG_LEN, SIGNATURE_LEN};

use super::SessionError;

pub const MSG1_LEN: usize = DH_PUBLIC_LEN;
pub const MSG2_LEN: usize = DH_PUBLIC_LEN + SIGNATURE_LEN + MAC_TAG_LEN;
pub const MSG3_LEN: usize = SIGNATURE_LEN + MAC_TAG_LEN;

/// Opaque point-to-point envelope the NWDAF routes by `dst`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub src: Hostname,
    pub dst: Hostname,
    pub payload: Vec<u8>,
}

/// `g^x` from the initiator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Msg1 {
    pub gx: DhPublic,
}

/// `g^y, Sig_R(g^x, g^y), MAC_K(responder)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Msg2 {
    pub gy: DhPublic,
    pub signature: Signature,
    pub mac: [u8; MAC_TAG_LEN],
}

/// `Sig_I(g^x, g^y), MAC_K(initiator)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Msg3 {
    pub signature: Signature,
    pub mac: [u8; MAC_TAG_LEN],
}

fn check_len(payload: &[u8], expected: usize) -> Result<(), SessionError> {
    if payload.len() != expected {
        return Err(SessionError::Malformed(format!(
            "SIGMA payload of {} bytes, expected {expected}",
            payload.len()
        )));
    }
    Ok(())
}

impl Msg1 {
    pub fn encode(&self) -> Vec<u8> {
        self.gx.as_bytes().to_vec()
    }

    pub fn decode(payload: &[u8]) -> Result<Self, SessionError> {
        check_len(payload, MSG1_LEN)?;
        Ok(Self {
            gx: DhPublic::from_bytes(payload)?,
        })
    }
}

impl Msg2 {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MSG2_LEN);
        out.extend_from_slice(self.gy.as_bytes());
        out.extend_from_slice(&self.signature.0);
        out.extend_from_slice(&self.mac);
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, SessionError> {
        check_len(payload, MSG2_LEN)?;
        let (gy, rest) = payload.split_at(DH_PUBLIC_LEN);
        let (sig, mac) = rest.split_at(SIGNATURE_LEN);
        Ok(Self {
            gy: DhPublic::from_bytes(gy)?,
            signature: Signature::from_bytes(sig)?,
            mac: mac.try_into().expect("length checked"),
        })
    }
}

impl Msg3 {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MSG3_LEN);
        out.extend_from_slice(&self.signature.0);
        out.extend_from_slice(&self.mac);
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, SessionError> {
        check_len(payload, MSG3_LEN)?;
        let (sig, mac) = payload.split_at(SIGNATURE_LEN);
        Ok(Self {
            signature: Signature::from_bytes(sig)?,
            mac: mac.try_into().expect("length checked"),
        })
    }
}

/// Signed transcript `g^x || g^y`.
pub fn transcript(gx: &DhPublic, gy: &DhPublic) -> [u8; 2 * DH_PUBLIC_LEN] {
    let mut t = [0u8; 2 * DH_PUBLIC_LEN];
    t[..DH_PUBLIC_LEN].copy_from_slice(gx.as_bytes());
    t[DH_PUBLIC_LEN..].copy_from_slice(gy.as_bytes());
    t
}
