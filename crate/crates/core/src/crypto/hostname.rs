use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CryptoError;

/// Wire length of every NF hostname.
pub const HOSTNAME_LEN: usize = 30;
/// Length of the `gNB-XXXXXXXX` identifier prefix.
pub const NF_ID_LEN: usize = 12;

const PREFIX: &[u8] = b"gNB-";

/// A fixed-width NF hostname of the form `gNB-XXXXXXXX.<domain>`.
///
/// Ordering is byte-lexicographic; the coordinator uses it as the total
/// order over participants.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hostname([u8; HOSTNAME_LEN]);

impl Hostname {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let malformed = |why: &str| {
            CryptoError::MalformedHostname(format!("{why}: {:?}", String::from_utf8_lossy(bytes)))
        };
        if bytes.len() != HOSTNAME_LEN {
            return Err(malformed(&format!(
                "expected {HOSTNAME_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        if !bytes.starts_with(PREFIX) {
            return Err(malformed("missing gNB- prefix"));
        }
        let id = &bytes[PREFIX.len()..NF_ID_LEN];
        if !id
            .iter()
            .all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(b))
        {
            return Err(malformed("identifier must be 8 upper-case hex digits"));
        }
        if bytes[NF_ID_LEN] != b'.' {
            return Err(malformed("missing domain separator"));
        }
        let domain = &bytes[NF_ID_LEN + 1..];
        let domain_ok = domain
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'.' || *b == b'-')
            && domain[0] != b'.'
            && domain[domain.len() - 1] != b'.';
        if !domain_ok {
            return Err(malformed("invalid domain"));
        }
        let mut out = [0u8; HOSTNAME_LEN];
        out.copy_from_slice(bytes);
        Ok(Self(out))
    }

    /// Builds the hostname for NF number `index` under `domain`. The domain
    /// must be exactly 17 bytes long.
    pub fn for_index(index: u32, domain: &str) -> Result<Self, CryptoError> {
        Self::from_bytes(format!("gNB-{index:08X}.{domain}").as_bytes())
    }

    pub fn as_bytes(&self) -> &[u8; HOSTNAME_LEN] {
        &self.0
    }

    /// The 12-byte `gNB-XXXXXXXX` token that must be unique within the PKI.
    pub fn nf_id(&self) -> &[u8] {
        &self.0[..NF_ID_LEN]
    }

    pub fn as_str(&self) -> &str {
        // validated as ASCII on construction
        std::str::from_utf8(&self.0).expect("hostname is ASCII")
    }
}

impl fmt::Display for Hostname {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Hostname {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hostname({})", self.as_str())
    }
}

impl FromStr for Hostname {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_bytes(s.as_bytes())
    }
}

impl Serialize for Hostname {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Hostname {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
