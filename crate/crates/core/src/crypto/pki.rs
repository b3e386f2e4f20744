use std::collections::{BTreeMap, HashSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::hostname::Hostname;
use super::primitives::{Signature, SigningKey, VerifyingKey};
use super::CryptoError;

const CERT_CONTEXT: &[u8] = b"fedsec/certificate/v1";

/// Binding of a hostname to a verification key, signed by the PKI root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub hostname: Hostname,
    pub public_key: VerifyingKey,
    pub signature: Signature,
}

impl Certificate {
    fn signed_bytes(hostname: &Hostname, key: &VerifyingKey) -> Vec<u8> {
        let mut m = Vec::with_capacity(CERT_CONTEXT.len() + 30 + 32);
        m.extend_from_slice(CERT_CONTEXT);
        m.extend_from_slice(hostname.as_bytes());
        m.extend_from_slice(&key.to_bytes());
        m
    }

    pub fn verify(&self, root: &VerifyingKey) -> bool {
        root.verify(
            &Self::signed_bytes(&self.hostname, &self.public_key),
            &self.signature,
        )
    }
}

/// An enrolled NF: hostname, long-term signing key and certificate.
#[derive(Clone, Debug)]
pub struct Identity {
    pub hostname: Hostname,
    pub signing_key: SigningKey,
    pub certificate: Certificate,
}

/// JSON record of the certificate store export format.
#[derive(Serialize, Deserialize)]
struct CertRecord {
    hostname: String,
    public_key_hex: String,
    signature_hex: String,
}

/// Read-only view of issued certificates, anchored to the root key.
#[derive(Clone, Debug)]
pub struct CertificateStore {
    root: VerifyingKey,
    certs: BTreeMap<Hostname, Certificate>,
}

impl CertificateStore {
    pub fn root_key(&self) -> &VerifyingKey {
        &self.root
    }

    pub fn lookup(&self, hostname: &Hostname) -> Result<&Certificate, CryptoError> {
        self.certs
            .get(hostname)
            .ok_or(CryptoError::UnknownHost(*hostname))
    }

    /// Looks up a certificate and checks the root signature on it.
    pub fn verified_key(&self, hostname: &Hostname) -> Result<VerifyingKey, CryptoError> {
        let cert = self.lookup(hostname)?;
        if !cert.verify(&self.root) {
            return Err(CryptoError::BadCertificate(*hostname));
        }
        Ok(cert.public_key)
    }

    pub fn len(&self) -> usize {
        self.certs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.certs.is_empty()
    }

    pub fn to_json(&self) -> String {
        let records: Vec<CertRecord> = self
            .certs
            .values()
            .map(|c| CertRecord {
                hostname: c.hostname.to_string(),
                public_key_hex: hex::encode(c.public_key.to_bytes()),
                signature_hex: hex::encode(c.signature.0),
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("certificate records serialize")
    }

    /// Imports a store exported by [`CertificateStore::to_json`]. Every record
    /// must verify under `root`.
    pub fn from_json(json: &str, root: VerifyingKey) -> Result<Self, CryptoError> {
        let records: Vec<CertRecord> =
            serde_json::from_str(json).map_err(|e| CryptoError::StoreFormat(e.to_string()))?;
        let mut certs = BTreeMap::new();
        let mut ids = HashSet::new();
        for r in records {
            let hostname: Hostname = r.hostname.parse()?;
            let key_bytes = hex::decode(&r.public_key_hex)
                .map_err(|e| CryptoError::StoreFormat(e.to_string()))?;
            let sig_bytes = hex::decode(&r.signature_hex)
                .map_err(|e| CryptoError::StoreFormat(e.to_string()))?;
            let cert = Certificate {
                hostname,
                public_key: VerifyingKey::from_bytes(&key_bytes)?,
                signature: Signature::from_bytes(&sig_bytes)?,
            };
            if !cert.verify(&root) {
                return Err(CryptoError::BadCertificate(hostname));
            }
            if !ids.insert(hostname.nf_id().to_vec()) {
                return Err(CryptoError::DuplicateHost(hostname));
            }
            certs.insert(hostname, cert);
        }
        Ok(Self { root, certs })
    }
}

/// Single in-process certificate authority.
#[derive(Debug)]
pub struct Pki {
    root: SigningKey,
    store: CertificateStore,
    issued_ids: HashSet<Vec<u8>>,
}

impl Pki {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let root = SigningKey::generate(rng);
        let store = CertificateStore {
            root: root.verifying_key(),
            certs: BTreeMap::new(),
        };
        Self {
            root,
            store,
            issued_ids: HashSet::new(),
        }
    }

    /// Enrolls `hostname`, generating its signing key pair.
    pub fn issue<R: RngCore + CryptoRng>(
        &mut self,
        hostname: &str,
        rng: &mut R,
    ) -> Result<Identity, CryptoError> {
        let hostname: Hostname = hostname.parse()?;
        if !self.issued_ids.insert(hostname.nf_id().to_vec()) {
            return Err(CryptoError::DuplicateHost(hostname));
        }
        let signing_key = SigningKey::generate(rng);
        let public_key = signing_key.verifying_key();
        let signature = self
            .root
            .sign(&Certificate::signed_bytes(&hostname, &public_key));
        let certificate = Certificate {
            hostname,
            public_key,
            signature,
        };
        self.store.certs.insert(hostname, certificate.clone());
        Ok(Identity {
            hostname,
            signing_key,
            certificate,
        })
    }

    pub fn lookup(&self, hostname: &Hostname) -> Result<&Certificate, CryptoError> {
        self.store.lookup(hostname)
    }

    pub fn store(&self) -> &CertificateStore {
        &self.store
    }

    pub fn root_key(&self) -> VerifyingKey {
        self.root.verifying_key()
    }
}
