//! Fixed primitive instantiations at the 128-bit security level.
//!
//! | role        | instantiation                      | size     |
//! |-------------|------------------------------------|----------|
//! | DH group    | X25519                             | 32 B     |
//! | signature   | Ed25519                            | 64 B     |
//! | MAC         | HMAC-SHA-256 truncated             | 16 B tag |
//! | PRF         | HMAC-SHA-256, length-framed label  | 32 B     |
//! | PRG         | ChaCha20 keystream                 | any      |

use ed25519_dalek::Signer;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;

use super::CryptoError;

pub const DH_PUBLIC_LEN: usize = 32;
pub const DH_SECRET_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const MAC_KEY_LEN: usize = 16;
pub const MAC_TAG_LEN: usize = 16;
pub const PRF_OUT_LEN: usize = 32;
pub const PRG_SEED_LEN: usize = 32;

type HmacSha256 = Hmac<Sha256>;

/// Encoded X25519 public value `g^x`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct DhPublic(pub [u8; DH_PUBLIC_LEN]);

impl DhPublic {
    /// Parses a canonical encoding: high bit clear and below the field prime.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; DH_PUBLIC_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidGroupElement)?;
        if !is_canonical_u(&arr) {
            return Err(CryptoError::InvalidGroupElement);
        }
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; DH_PUBLIC_LEN] {
        &self.0
    }
}

fn is_canonical_u(u: &[u8; 32]) -> bool {
    if u[31] & 0x80 != 0 {
        return false;
    }
    // reject 2^255 - 19 ..= 2^255 - 1
    let top_is_max = u[31] == 0x7f && u[1..31].iter().all(|&b| b == 0xff);
    !(top_is_max && u[0] >= 0xed)
}

/// An ephemeral Diffie-Hellman key pair.
pub struct DhKeyPair {
    secret: x25519_dalek::StaticSecret,
    public: DhPublic,
}

impl DhKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = x25519_dalek::StaticSecret::random_from_rng(rng);
        let public = DhPublic(x25519_dalek::PublicKey::from(&secret).to_bytes());
        Self { secret, public }
    }

    pub fn public(&self) -> DhPublic {
        self.public
    }

    /// Computes `g^xy`; rejects low-order peer values that would force a
    /// predictable secret.
    pub fn shared(&self, peer: &DhPublic) -> Result<[u8; DH_SECRET_LEN], CryptoError> {
        let shared = self
            .secret
            .diffie_hellman(&x25519_dalek::PublicKey::from(peer.0));
        if !shared.was_contributory() {
            return Err(CryptoError::InvalidGroupElement);
        }
        Ok(shared.to_bytes())
    }
}

impl std::fmt::Debug for DhKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DhKeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Long-term signing key of an NF.
#[derive(Clone)]
pub struct SigningKey(ed25519_dalek::SigningKey);

/// Public verification key, 32 bytes.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct VerifyingKey(ed25519_dalek::VerifyingKey);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(ed25519_dalek::SigningKey::generate(rng))
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        VerifyingKey(self.0.verifying_key())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.0.sign(message).to_bytes())
    }
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("SigningKey")
            .field(&self.verifying_key())
            .finish()
    }
}

impl VerifyingKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::InvalidKey)?;
        ed25519_dalek::VerifyingKey::from_bytes(&arr)
            .map(Self)
            .map_err(|_| CryptoError::InvalidKey)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    /// Returns `true` iff `signature` is valid for `message`.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        self.0.verify_strict(message, &sig).is_ok()
    }
}

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes
            .try_into()
            .map(Self)
            .map_err(|_| CryptoError::InvalidLength {
                what: "signature",
                expected: SIGNATURE_LEN,
                got: bytes.len(),
            })
    }
}

/// Symmetric key for the SIGMA MAC; only ever produced by [`prf`].
#[derive(Clone, PartialEq, Eq)]
pub struct MacKey([u8; MAC_KEY_LEN]);

impl MacKey {
    pub fn derive(dh_secret: &[u8; DH_SECRET_LEN], label: &[u8], context: &[u8]) -> Self {
        let out = prf(dh_secret, label, context);
        let mut key = [0u8; MAC_KEY_LEN];
        key.copy_from_slice(&out[..MAC_KEY_LEN]);
        Self(key)
    }

    pub fn tag(&self, message: &[u8]) -> [u8; MAC_TAG_LEN] {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("HMAC accepts any key length");
        mac.update(message);
        let full = mac.finalize().into_bytes();
        let mut tag = [0u8; MAC_TAG_LEN];
        tag.copy_from_slice(&full[..MAC_TAG_LEN]);
        tag
    }

    pub fn verify(&self, message: &[u8], tag: &[u8]) -> bool {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("HMAC accepts any key length");
        mac.update(message);
        tag.len() == MAC_TAG_LEN && mac.verify_truncated_left(tag).is_ok()
    }
}

impl std::fmt::Debug for MacKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MacKey(..)")
    }
}

/// Keyed pseudo-random function. The label is length-prefixed so that
/// `(label, context)` pairs never collide by concatenation.
pub fn prf(secret: &[u8; 32], label: &[u8], context: &[u8]) -> [u8; PRF_OUT_LEN] {
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(&(label.len() as u32).to_be_bytes());
    mac.update(label);
    mac.update(context);
    mac.finalize().into_bytes().into()
}

/// Expands `seed` into `len` pseudo-random bytes. Output for a shorter length
/// is always a prefix of the output for a longer one.
pub fn prg(seed: &[u8; PRG_SEED_LEN], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    ChaCha20Rng::from_seed(*seed).fill_bytes(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn dh_both_sides_agree() {
        let mut rng = rng();
        let a = DhKeyPair::generate(&mut rng);
        let b = DhKeyPair::generate(&mut rng);
        assert_eq!(
            a.shared(&b.public()).unwrap(),
            b.shared(&a.public()).unwrap()
        );
    }

    #[test]
    fn dh_rejects_low_order_and_noncanonical() {
        let a = DhKeyPair::generate(&mut rng());
        let zero = DhPublic::from_bytes(&[0u8; 32]).unwrap();
        assert_eq!(a.shared(&zero), Err(CryptoError::InvalidGroupElement));
        let mut high = a.public().0;
        high[31] |= 0x80;
        assert!(DhPublic::from_bytes(&high).is_err());
        let mut p = [0xffu8; 32];
        p[0] = 0xed;
        p[31] = 0x7f;
        assert!(DhPublic::from_bytes(&p).is_err());
        p[0] = 0xec;
        assert!(DhPublic::from_bytes(&p).is_ok());
        assert!(DhPublic::from_bytes(&[1u8; 31]).is_err());
    }

    #[test]
    fn dh_public_roundtrips() {
        let a = DhKeyPair::generate(&mut rng());
        assert_eq!(
            DhPublic::from_bytes(a.public().as_bytes()).unwrap(),
            a.public()
        );
    }

    #[test]
    fn thousand_exchanges_give_distinct_secrets() {
        let mut rng = rng();
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let a = DhKeyPair::generate(&mut rng);
            let b = DhKeyPair::generate(&mut rng);
            assert!(seen.insert(a.shared(&b.public()).unwrap()));
        }
    }

    #[test]
    fn signature_accepts_and_rejects() {
        let mut rng = rng();
        let sk = SigningKey::generate(&mut rng);
        let other = SigningKey::generate(&mut rng);
        let msg = b"transcript";
        let sig = sk.sign(msg);
        assert!(sk.verifying_key().verify(msg, &sig));
        assert!(!other.verifying_key().verify(msg, &sig));
        let mut bad = sig;
        bad.0[10] ^= 0x04;
        assert!(!sk.verifying_key().verify(msg, &bad));
        assert!(!sk.verifying_key().verify(b"transcripT", &sig));
    }

    #[test]
    fn mac_contract() {
        let k1 = MacKey::derive(&[1u8; 32], b"mac-key", b"");
        let k2 = MacKey::derive(&[2u8; 32], b"mac-key", b"");
        let tag = k1.tag(b"gNB-00000001.myran.example.com");
        assert!(k1.verify(b"gNB-00000001.myran.example.com", &tag));
        assert!(!k2.verify(b"gNB-00000001.myran.example.com", &tag));
        assert!(!k1.verify(b"gNB-00000002.myran.example.com", &tag));
        assert!(!k1.verify(b"gNB-00000001.myran.example.com", &tag[..15]));
    }

    #[test]
    fn prf_deterministic_and_context_separated() {
        let s = [9u8; 32];
        assert_eq!(prf(&s, b"mask", b"round=0"), prf(&s, b"mask", b"round=0"));
        assert_ne!(prf(&s, b"mask", b"round=0"), prf(&s, b"mask", b"round=1"));
        // label framing: ("ab","c") must differ from ("a","bc")
        assert_ne!(prf(&s, b"ab", b"c"), prf(&s, b"a", b"bc"));
    }

    #[test]
    fn prf_exhaustive_small_context_sweep_is_collision_free() {
        let s = [3u8; 32];
        let mut seen = HashSet::new();
        for label in [&b"mask"[..], b"mac-key", b"pair-secret", b""] {
            for ctx in 0u16..256 {
                assert!(seen.insert(prf(&s, label, &ctx.to_be_bytes())));
            }
        }
    }

    #[test]
    fn prf_bit_balance() {
        // counting oracle: 10^4 outputs x 256 bits
        let s = [5u8; 32];
        let mut ones = 0u64;
        let n = 10_000u32;
        for i in 0..n {
            ones += prf(&s, b"balance", &i.to_be_bytes())
                .iter()
                .map(|b| b.count_ones() as u64)
                .sum::<u64>();
        }
        let frac = ones as f64 / (n as f64 * 256.0);
        assert!((frac - 0.5).abs() < 0.01 * 0.5, "bit fraction {frac}");
    }

    #[test]
    fn prg_prefix_and_determinism() {
        let seed = [4u8; 32];
        assert!(prg(&seed, 0).is_empty());
        assert_eq!(prg(&seed, 40), prg(&seed, 40));
        let short = prg(&seed, 16);
        let long = prg(&seed, 64);
        assert_eq!(&long[..16], &short[..]);
        for (a, b) in [(1usize, 7usize), (5, 64), (63, 130)] {
            assert_eq!(&prg(&seed, b)[..a], &prg(&seed, a)[..]);
        }
    }
}
