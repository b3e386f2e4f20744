//! Fixed-point encoding, pairwise mask derivation and the cancelling secure sum.
//!
//! An NF at position `k` in the selection list adds the mask it shares with
//! every peer at a higher position and subtracts the mask shared with every
//! peer at a lower position. Summed over the whole selection list each mask
//! appears once with each sign, so the aggregate is `sum(n_k * w_k) mod R`.

mod encoding;

pub use encoding::{decode, encode, ModulusConfig};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::crypto::{prf, prg, Hostname, PRG_SEED_LEN};

const MASK_LABEL: &[u8] = b"mask";
const WORD_LEN: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum MaskingError {
    #[error("invalid modulus configuration: {0}")]
    Config(String),
    #[error("value {value} outside encodable range +/-{bound}")]
    OutOfRange { value: f64, bound: f64 },
    #[error("sample count {0} exceeds max_count")]
    CountOutOfRange(u64),
    #[error("mask for round {mask} used in round {expected}")]
    RoundMismatch { expected: u64, mask: u64 },
    #[error("vector length {got} does not match {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no mask shared with peer {0}")]
    MissingPeerMask(Hostname),
    #[error("mask {0:?} does not involve this NF or is duplicated")]
    UnexpectedMask(PairId),
    #[error("expected updates from {expected} senders, got {got}")]
    SenderSetMismatch { expected: usize, got: usize },
    #[error("no updates to aggregate")]
    Empty,
    #[error("total sample count is zero or wrapped")]
    DegenerateCount,
}

/// An unordered NF pair, stored as (lower, higher) hostname.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairId {
    pub low: Hostname,
    pub high: Hostname,
}

impl PairId {
    pub fn new(a: Hostname, b: Hostname) -> Self {
        if a <= b {
            Self { low: a, high: b }
        } else {
            Self { low: b, high: a }
        }
    }

    pub fn contains(&self, h: &Hostname) -> bool {
        self.low == *h || self.high == *h
    }

    pub fn other(&self, h: &Hostname) -> Option<Hostname> {
        if self.low == *h {
            Some(self.high)
        } else if self.high == *h {
            Some(self.low)
        } else {
            None
        }
    }
}

/// Real-valued local update and its sample count `n_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelVector {
    pub weights: Vec<f64>,
    pub n: u64,
}

/// A per-round pseudo-random mask shared by exactly two NFs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairMask {
    pub vector: Vec<u64>,
    pub count_mask: u64,
    pub round: u64,
    pub pair: PairId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSign {
    Add,
    Subtract,
}

#[derive(Clone, Debug)]
pub struct SignedMask {
    pub mask: PairMask,
    pub sign: MaskSign,
}

/// Wire payload of the secure sum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedUpdate {
    pub vector: Vec<u64>,
    pub masked_count: u64,
    pub round: u64,
    pub sender: Hostname,
}

/// Component-wise sum of masked updates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Aggregate {
    pub vector: Vec<u64>,
    pub total_count: u64,
    pub round: u64,
}

/// Expands a pair secret into `d + 1` words mod R: `d` vector words followed
/// by the count mask. Both endpoints compute identical bytes.
pub fn derive_pair_mask(
    secret: &[u8; 32],
    pair: PairId,
    round: u64,
    d: usize,
    cfg: &ModulusConfig,
) -> PairMask {
    let mut context = [0u8; 12];
    context[..8].copy_from_slice(&round.to_be_bytes());
    context[8..].copy_from_slice(&(d as u32).to_be_bytes());
    let seed: [u8; PRG_SEED_LEN] = prf(secret, MASK_LABEL, &context);
    let stream = prg(&seed, (d + 1) * WORD_LEN);
    let mut words = stream
        .chunks_exact(WORD_LEN)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")) & cfg.bitmask());
    let vector: Vec<u64> = words.by_ref().take(d).collect();
    let count_mask = words.next().expect("count word present");
    PairMask {
        vector,
        count_mask,
        round,
        pair,
    }
}

/// Sign convention: the lower-positioned member of a pair adds the mask, the
/// higher-positioned member subtracts it.
pub fn sign_for(own_position: usize, peer_position: usize) -> MaskSign {
    if own_position < peer_position {
        MaskSign::Add
    } else {
        MaskSign::Subtract
    }
}

/// Builds `n_k * encode(w) + sum(sign * mask) mod R` and the matching masked count.
///
/// `peers` lists every other member of the selection list; each must be
/// covered by exactly one mask in `masks`.
pub fn mask_update(
    sender: Hostname,
    mv: &ModelVector,
    masks: &[SignedMask],
    peers: &[Hostname],
    round: u64,
    cfg: &ModulusConfig,
) -> Result<MaskedUpdate, MaskingError> {
    if mv.n > cfg.max_count {
        return Err(MaskingError::CountOutOfRange(mv.n));
    }
    let d = mv.weights.len();
    let mut covered = BTreeSet::new();
    for m in masks {
        if m.mask.round != round {
            return Err(MaskingError::RoundMismatch {
                expected: round,
                mask: m.mask.round,
            });
        }
        if m.mask.vector.len() != d {
            return Err(MaskingError::LengthMismatch {
                expected: d,
                got: m.mask.vector.len(),
            });
        }
        let peer = m
            .mask
            .pair
            .other(&sender)
            .ok_or(MaskingError::UnexpectedMask(m.mask.pair))?;
        if !peers.contains(&peer) || !covered.insert(peer) {
            return Err(MaskingError::UnexpectedMask(m.mask.pair));
        }
    }
    if let Some(missing) = peers.iter().find(|p| !covered.contains(p)) {
        return Err(MaskingError::MissingPeerMask(*missing));
    }

    let n = mv.n & cfg.bitmask();
    let mut vector = mv
        .weights
        .iter()
        .map(|&w| encode(w, cfg).map(|e| cfg.mul(n, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut masked_count = n;
    for m in masks {
        let apply = |acc: u64, v: u64| match m.sign {
            MaskSign::Add => cfg.add(acc, v),
            MaskSign::Subtract => cfg.sub(acc, v),
        };
        for (slot, &mv) in vector.iter_mut().zip(&m.mask.vector) {
            *slot = apply(*slot, mv);
        }
        masked_count = apply(masked_count, m.mask.count_mask);
    }
    Ok(MaskedUpdate {
        vector,
        masked_count,
        round,
        sender,
    })
}

/// Sums masked updates component-wise mod R. The senders must be exactly
/// `expected_senders`, all in the same round with the same length.
pub fn sum_masked(
    updates: &[MaskedUpdate],
    expected_senders: &[Hostname],
    cfg: &ModulusConfig,
) -> Result<Aggregate, MaskingError> {
    let first = updates.first().ok_or(MaskingError::Empty)?;
    let senders: BTreeSet<_> = updates.iter().map(|u| u.sender).collect();
    let expected: BTreeSet<_> = expected_senders.iter().copied().collect();
    if senders.len() != updates.len() || senders != expected {
        return Err(MaskingError::SenderSetMismatch {
            expected: expected.len(),
            got: updates.len(),
        });
    }
    let d = first.vector.len();
    let mut vector = vec![0u64; d];
    let mut total_count = 0u64;
    for u in updates {
        if u.round != first.round {
            return Err(MaskingError::RoundMismatch {
                expected: first.round,
                mask: u.round,
            });
        }
        if u.vector.len() != d {
            return Err(MaskingError::LengthMismatch {
                expected: d,
                got: u.vector.len(),
            });
        }
        for (acc, &v) in vector.iter_mut().zip(&u.vector) {
            *acc = cfg.add(*acc, v);
        }
        total_count = cfg.add(total_count, u.masked_count);
    }
    Ok(Aggregate {
        vector,
        total_count,
        round: first.round,
    })
}

/// Turns the unmasked aggregate into the weighted average
/// `centered(agg[i]) / (total_count * 2^f)`.
pub fn decode_aggregate(agg: &Aggregate, cfg: &ModulusConfig) -> Result<Vec<f64>, MaskingError> {
    let total = cfg.centered(agg.total_count);
    if total <= 0 {
        return Err(MaskingError::DegenerateCount);
    }
    let denom = total as f64 * cfg.scale();
    Ok(agg
        .vector
        .iter()
        .map(|&v| cfg.centered(v) as f64 / denom)
        .collect())
}
