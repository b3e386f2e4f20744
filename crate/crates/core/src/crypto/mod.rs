//! Cryptographic primitives and the emulated operator PKI.

mod hostname;
mod pki;
mod primitives;

pub use hostname::{Hostname, HOSTNAME_LEN, NF_ID_LEN};
pub use pki::{Certificate, CertificateStore, Identity, Pki};
pub use primitives::{
    prf, prg, DhKeyPair, DhPublic, MacKey, Signature, SigningKey, VerifyingKey, DH_PUBLIC_LEN,
    DH_SECRET_LEN, MAC_KEY_LEN, MAC_TAG_LEN, PRF_OUT_LEN, PRG_SEED_LEN, SIGNATURE_LEN,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed hostname ({0})")]
    MalformedHostname(String),
    #[error("hostname {0} already enrolled")]
    DuplicateHost(Hostname),
    #[error("no certificate for {0}")]
    UnknownHost(Hostname),
    #[error("certificate for {0} does not verify under the PKI root")]
    BadCertificate(Hostname),
    #[error("invalid Diffie-Hellman group element")]
    InvalidGroupElement,
    #[error("invalid verification key")]
    InvalidKey,
    #[error("{what}: expected {expected} bytes, got {got}")]
    InvalidLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("certificate store: {0}")]
    StoreFormat(String),
}
