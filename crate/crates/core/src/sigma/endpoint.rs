use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};

use super::messages::{transcript, Container, Msg1, Msg2, Msg3};
use super::state::{PairwiseSecret, ReplayCounter, SelectionList};
use super::SessionError;
use crate::crypto::{prf, CertificateStore, DhKeyPair, DhPublic, Hostname, Identity, MacKey};

const MAC_KEY_LABEL: &[u8] = b"mac-key";
const PAIR_SECRET_LABEL: &[u8] = b"pair-secret";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum HandshakePhase {
    Sent1,
    Sent2,
    Sent3,
    Complete,
}

/// Progress of one SIGMA run with a single peer.
#[derive(Debug)]
pub struct HandshakeState {
    pub peer: Hostname,
    pub role: Role,
    ephemeral: DhKeyPair,
    gx: DhPublic,
    gy: Option<DhPublic>,
    mac_key: Option<MacKey>,
    dh_secret: Option<[u8; 32]>,
    pub phase: HandshakePhase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Leg {
    AwaitMsg1,
    AwaitMsg2,
    AwaitMsg3,
    Ready,
}

#[derive(Debug)]
struct ActiveSession {
    session_id: u32,
    t: u64,
    selection: SelectionList,
    position: usize,
    /// lower-positioned peers we initiate with
    initiating: BTreeSet<Hostname>,
    /// higher-positioned peers that initiate with us
    responding: BTreeSet<Hostname>,
    handshakes: BTreeMap<Hostname, HandshakeState>,
    pending: BTreeMap<Hostname, [u8; 32]>,
    leg: Leg,
}

/// Secrets an NF needs to mask its update for one round.
#[derive(Clone, Debug)]
pub struct RoundKeys {
    pub selection: SelectionList,
    pub position: usize,
    /// `(peer, peer_position, pair secret)` for every other member of S.
    pub peers: Vec<(Hostname, usize, [u8; 32])>,
}

/// NF-side SIGMA engine: replay counter, cross-session secret cache and the
/// in-flight session.
#[derive(Debug)]
pub struct SigmaEndpoint {
    identity: Identity,
    threshold: usize,
    replay: ReplayCounter,
    cache: BTreeMap<Hostname, PairwiseSecret>,
    session: Option<ActiveSession>,
    handshakes_started: u64,
    /// secrets first cached by the latest aggregation, keyed by its session
    last_commit: Option<(u32, Vec<Hostname>)>,
}

fn mac_key(dh: &[u8; 32], session_id: u32) -> MacKey {
    MacKey::derive(dh, MAC_KEY_LABEL, &session_id.to_be_bytes())
}

fn pair_secret(dh: &[u8; 32]) -> [u8; 32] {
    prf(dh, PAIR_SECRET_LABEL, b"")
}

impl SigmaEndpoint {
    pub fn new(identity: Identity, threshold: usize) -> Self {
        Self {
            identity,
            threshold,
            replay: ReplayCounter::new(),
            cache: BTreeMap::new(),
            session: None,
            handshakes_started: 0,
            last_commit: None,
        }
    }

    pub fn hostname(&self) -> Hostname {
        self.identity.hostname
    }

    pub fn replay_counter(&self) -> ReplayCounter {
        self.replay
    }

    pub fn cached_secret(&self, peer: &Hostname) -> Option<&PairwiseSecret> {
        self.cache.get(peer)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Number of SIGMA runs this NF has started in either role.
    pub fn handshakes_started(&self) -> u64 {
        self.handshakes_started
    }

    pub fn in_session(&self) -> bool {
        self.session.is_some()
    }

    /// Drops the in-flight session; secrets it produced are not cached.
    pub fn abort(&mut self) {
        self.session = None;
    }

    /// Handles an abort notice for `session_id`. If this NF already moved
    /// into aggregation for that session, the secrets it cached there are
    /// evicted again so peers that never got that far stay consistent.
    pub fn abort_session(&mut self, session_id: u32) {
        if self
            .session
            .as_ref()
            .is_some_and(|s| s.session_id == session_id)
        {
            self.session = None;
        }
        if let Some((sid, peers)) = self.last_commit.take() {
            if sid == session_id {
                for p in peers {
                    self.cache.remove(&p);
                }
            } else {
                self.last_commit = Some((sid, peers));
            }
        }
    }

    /// Handles Key Setup Request `(S, t)`: emits msg1 for every lower-positioned
    /// peer without a cached secret.
    pub fn handle_key_setup<R: RngCore + CryptoRng>(
        &mut self,
        session_id: u32,
        t: u64,
        selection: SelectionList,
        rng: &mut R,
    ) -> Result<Vec<Container>, SessionError> {
        self.session = None;
        let me = self.identity.hostname;
        if selection.len() < self.threshold {
            return Err(SessionError::BelowThreshold {
                size: selection.len(),
                threshold: self.threshold,
            });
        }
        let position = selection.position(&me).ok_or(SessionError::NotMember(me))?;
        if !self.replay.is_fresh(t) {
            return Err(SessionError::Replay {
                t,
                last: self.replay.last().unwrap_or_default(),
            });
        }

        let hosts = selection.hosts();
        let initiating: BTreeSet<_> = hosts[..position]
            .iter()
            .filter(|p| !self.cache.contains_key(p))
            .copied()
            .collect();
        let responding: BTreeSet<_> = hosts[position + 1..]
            .iter()
            .filter(|p| !self.cache.contains_key(p))
            .copied()
            .collect();

        let mut handshakes = BTreeMap::new();
        let mut out = Vec::with_capacity(initiating.len());
        for &peer in hosts[..position].iter().filter(|p| initiating.contains(p)) {
            let ephemeral = DhKeyPair::generate(rng);
            let gx = ephemeral.public();
            out.push(Container {
                src: me,
                dst: peer,
                payload: Msg1 { gx }.encode(),
            });
            handshakes.insert(
                peer,
                HandshakeState {
                    peer,
                    role: Role::Initiator,
                    ephemeral,
                    gx,
                    gy: None,
                    mac_key: None,
                    dh_secret: None,
                    phase: HandshakePhase::Sent1,
                },
            );
            self.handshakes_started += 1;
        }

        self.session = Some(ActiveSession {
            session_id,
            t,
            selection,
            position,
            initiating,
            responding,
            handshakes,
            pending: BTreeMap::new(),
            leg: Leg::AwaitMsg1,
        });
        Ok(out)
    }

    /// Handles one routed batch of containers and returns this NF's reply batch.
    pub fn handle_batch<R: RngCore + CryptoRng>(
        &mut self,
        session_id: u32,
        t: u64,
        containers: &[Container],
        store: &CertificateStore,
        rng: &mut R,
    ) -> Result<Vec<Container>, SessionError> {
        let me = self.identity.hostname;
        let session = self.session.as_mut().ok_or(SessionError::NoSession)?;
        if session.session_id != session_id || session.t != t {
            return Err(SessionError::SessionMismatch);
        }

        let mut srcs = BTreeSet::new();
        for c in containers {
            if c.dst != me {
                return Err(SessionError::UnexpectedContainer(c.src));
            }
            if !session.selection.contains(&c.src) {
                return Err(SessionError::NotMember(c.src));
            }
            if !srcs.insert(c.src) {
                return Err(SessionError::DuplicateHandshake(c.src));
            }
        }
        let expected = match session.leg {
            Leg::AwaitMsg1 | Leg::AwaitMsg3 => &session.responding,
            Leg::AwaitMsg2 => &session.initiating,
            Leg::Ready => return Err(SessionError::Protocol("batch after session ready".into())),
        };
        if let Some(extra) = srcs.difference(expected).next() {
            return Err(SessionError::UnexpectedContainer(*extra));
        }
        if let Some(missing) = expected.difference(&srcs).next() {
            return Err(SessionError::MissingContainer(*missing));
        }

        let mut out = Vec::with_capacity(containers.len());
        match session.leg {
            Leg::AwaitMsg1 => {
                for c in containers {
                    if session.handshakes.contains_key(&c.src) {
                        return Err(SessionError::DuplicateHandshake(c.src));
                    }
                    let msg1 = Msg1::decode(&c.payload)?;
                    let ephemeral = DhKeyPair::generate(rng);
                    let gy = ephemeral.public();
                    let dh = ephemeral.shared(&msg1.gx)?;
                    let key = mac_key(&dh, session_id);
                    let msg2 = Msg2 {
                        gy,
                        signature: self.identity.signing_key.sign(&transcript(&msg1.gx, &gy)),
                        mac: key.tag(me.as_bytes()),
                    };
                    out.push(Container {
                        src: me,
                        dst: c.src,
                        payload: msg2.encode(),
                    });
                    session.handshakes.insert(
                        c.src,
                        HandshakeState {
                            peer: c.src,
                            role: Role::Responder,
                            ephemeral,
                            gx: msg1.gx,
                            gy: Some(gy),
                            mac_key: Some(key),
                            dh_secret: Some(dh),
                            phase: HandshakePhase::Sent2,
                        },
                    );
                    self.handshakes_started += 1;
                }
                session.leg = Leg::AwaitMsg2;
            }
            Leg::AwaitMsg2 => {
                for c in containers {
                    let hs = session
                        .handshakes
                        .get_mut(&c.src)
                        .filter(|h| h.role == Role::Initiator && h.phase == HandshakePhase::Sent1)
                        .ok_or(SessionError::UnexpectedContainer(c.src))?;
                    let msg2 = Msg2::decode(&c.payload)?;
                    let dh = hs.ephemeral.shared(&msg2.gy)?;
                    let key = mac_key(&dh, session_id);
                    let peer_key = store.verified_key(&c.src)?;
                    let tr = transcript(&hs.gx, &msg2.gy);
                    if !peer_key.verify(&tr, &msg2.signature) {
                        return Err(SessionError::BadSignature(c.src));
                    }
                    if !key.verify(c.src.as_bytes(), &msg2.mac) {
                        return Err(SessionError::BadMac(c.src));
                    }
                    let msg3 = Msg3 {
                        signature: self.identity.signing_key.sign(&tr),
                        mac: key.tag(me.as_bytes()),
                    };
                    out.push(Container {
                        src: me,
                        dst: c.src,
                        payload: msg3.encode(),
                    });
                    hs.gy = Some(msg2.gy);
                    hs.mac_key = Some(key);
                    hs.dh_secret = Some(dh);
                    // the initiator holds the secret once msg3 is out
                    hs.phase = HandshakePhase::Sent3;
                    session.pending.insert(c.src, pair_secret(&dh));
                }
                session.leg = Leg::AwaitMsg3;
            }
            Leg::AwaitMsg3 => {
                for c in containers {
                    let hs = session
                        .handshakes
                        .get_mut(&c.src)
                        .filter(|h| h.role == Role::Responder && h.phase == HandshakePhase::Sent2)
                        .ok_or(SessionError::UnexpectedContainer(c.src))?;
                    let msg3 = Msg3::decode(&c.payload)?;
                    let peer_key = store.verified_key(&c.src)?;
                    let gy = hs.gy.expect("responder stored g^y");
                    if !peer_key.verify(&transcript(&hs.gx, &gy), &msg3.signature) {
                        return Err(SessionError::BadSignature(c.src));
                    }
                    let key = hs.mac_key.as_ref().expect("responder stored K");
                    if !key.verify(c.src.as_bytes(), &msg3.mac) {
                        return Err(SessionError::BadMac(c.src));
                    }
                    let dh = hs.dh_secret.expect("responder stored g^xy");
                    session.pending.insert(c.src, pair_secret(&dh));
                    hs.phase = HandshakePhase::Complete;
                }
                session.leg = Leg::Ready;
            }
            Leg::Ready => unreachable!("rejected above"),
        }
        Ok(out)
    }

    /// Consumes round `t` for aggregation: runs the replay check, commits the
    /// session's new secrets to the cache and returns a secret for every peer.
    pub fn begin_aggregation(
        &mut self,
        session_id: u32,
        t: u64,
    ) -> Result<RoundKeys, SessionError> {
        let session = self.session.take().ok_or(SessionError::NoSession)?;
        if session.session_id != session_id || session.t != t {
            return Err(SessionError::SessionMismatch);
        }
        self.replay.check(t)?;
        let hosts = session.selection.hosts();
        for (i, peer) in hosts.iter().enumerate() {
            if i != session.position
                && !self.cache.contains_key(peer)
                && !session.pending.contains_key(peer)
            {
                return Err(SessionError::MissingSecret(*peer));
            }
        }
        let committed: Vec<Hostname> = session.pending.keys().copied().collect();
        for (peer, secret) in session.pending {
            self.cache.insert(
                peer,
                PairwiseSecret {
                    peer,
                    secret,
                    last_round: None,
                },
            );
        }
        self.last_commit = Some((session_id, committed));
        let mut peers = Vec::with_capacity(hosts.len().saturating_sub(1));
        for (i, peer) in hosts.iter().enumerate() {
            if i == session.position {
                continue;
            }
            let entry = self.cache.get_mut(peer).expect("checked above");
            entry.advance(t)?;
            peers.push((*peer, i, entry.secret));
        }
        Ok(RoundKeys {
            selection: session.selection,
            position: session.position,
            peers,
        })
    }
}
