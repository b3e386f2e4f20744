//! NF actor: reacts to NWDAF frames with at most one reply each.

use rand_chacha::ChaCha20Rng;

use super::registry::{Capabilities, NfProfile};
use super::wire::{self, AbortReason, MsgType, WireMessage};
use crate::crypto::{CertificateStore, Hostname};
use crate::fl::{local_train, Dataset, LocalTrainer};
use crate::masking::{
    derive_pair_mask, mask_update, sign_for, ModelVector, ModulusConfig, PairId, SignedMask,
};
use crate::sigma::{SelectionList, SessionError, SigmaEndpoint};

pub struct NfNode {
    sigma: SigmaEndpoint,
    capabilities: Capabilities,
    dataset: Dataset,
    trainer: LocalTrainer,
    modulus: ModulusConfig,
    model: Vec<f64>,
    rng: ChaCha20Rng,
    train_seed: u64,
    last_update: Option<ModelVector>,
    updates_received: u64,
    last_abort: Option<AbortReason>,
}

impl NfNode {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma: SigmaEndpoint,
        capabilities: Capabilities,
        dataset: Dataset,
        trainer: LocalTrainer,
        modulus: ModulusConfig,
        dim: usize,
        rng: ChaCha20Rng,
        train_seed: u64,
    ) -> Self {
        Self {
            sigma,
            capabilities,
            dataset,
            trainer,
            modulus,
            model: vec![0.0; dim],
            rng,
            train_seed,
            last_update: None,
            updates_received: 0,
            last_abort: None,
        }
    }

    pub fn hostname(&self) -> Hostname {
        self.sigma.hostname()
    }

    pub fn profile(&self) -> NfProfile {
        NfProfile {
            hostname: self.hostname(),
            capabilities: self.capabilities.clone(),
        }
    }

    pub fn sigma(&self) -> &SigmaEndpoint {
        &self.sigma
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn trainer(&self) -> &LocalTrainer {
        &self.trainer
    }

    /// The global model as last received (binary32 values widened).
    pub fn model(&self) -> &[f64] {
        &self.model
    }

    /// Plaintext local update of the latest round this NF contributed to.
    pub fn last_update(&self) -> Option<&ModelVector> {
        self.last_update.as_ref()
    }

    pub fn updates_received(&self) -> u64 {
        self.updates_received
    }

    pub fn last_abort(&self) -> Option<AbortReason> {
        self.last_abort
    }

    /// Seed of the local SGD shuffle in round `t`.
    pub fn training_seed(&self, t: u64) -> u64 {
        super::derive_seed(self.train_seed, "train", t)
    }

    pub fn handle(&mut self, msg: &WireMessage, store: &CertificateStore) -> Option<WireMessage> {
        let (sid, t) = (msg.session_id, msg.t);
        let reply = match msg.msg_type {
            MsgType::KeySetupRequest => self
                .on_key_setup(msg)
                .map(|b| WireMessage::new(MsgType::ContainerBatch, sid, t, b)),
            MsgType::ContainerBatch => self
                .on_batch(msg, store)
                .map(|b| WireMessage::new(MsgType::ContainerBatch, sid, t, b)),
            MsgType::MpcInputRequest => self
                .on_mpc_request(msg)
                .map(|b| WireMessage::new(MsgType::MpcInputResponse, sid, t, b)),
            MsgType::GlobalModelUpdate => {
                match wire::decode_global_update(&msg.payload) {
                    Ok(w) if w.len() == self.model.len() => {
                        self.model = w.into_iter().map(f64::from).collect();
                        self.updates_received += 1;
                    }
                    _ => log::warn!("{}: ignoring malformed global update", self.hostname()),
                }
                return None;
            }
            MsgType::Abort => {
                self.last_abort = wire::decode_abort(&msg.payload).ok();
                self.sigma.abort_session(sid);
                return None;
            }
            MsgType::MpcInputResponse
            | MsgType::Register
            | MsgType::Subscribe
            | MsgType::Unsubscribe => Err(AbortReason::Protocol),
        };
        Some(reply.unwrap_or_else(|reason| {
            log::debug!(
                "{}: aborting session {sid} round {t}: {reason}",
                self.hostname()
            );
            self.sigma.abort();
            WireMessage::new(MsgType::Abort, sid, t, vec![reason as u8])
        }))
    }

    fn on_key_setup(&mut self, msg: &WireMessage) -> Result<Vec<u8>, AbortReason> {
        let hosts = wire::decode_key_setup(&msg.payload).map_err(|_| AbortReason::Malformed)?;
        let selection = SelectionList::new(hosts).map_err(|e| AbortReason::from(&e))?;
        let out = self
            .sigma
            .handle_key_setup(msg.session_id, msg.t, selection, &mut self.rng)
            .map_err(|e| AbortReason::from(&e))?;
        Ok(wire::encode_container_batch(&out))
    }

    fn on_batch(
        &mut self,
        msg: &WireMessage,
        store: &CertificateStore,
    ) -> Result<Vec<u8>, AbortReason> {
        let batch =
            wire::decode_container_batch(&msg.payload).map_err(|_| AbortReason::Malformed)?;
        let out = self
            .sigma
            .handle_batch(msg.session_id, msg.t, &batch, store, &mut self.rng)
            .map_err(|e| AbortReason::from(&e))?;
        Ok(wire::encode_container_batch(&out))
    }

    fn on_mpc_request(&mut self, msg: &WireMessage) -> Result<Vec<u8>, AbortReason> {
        if !msg.payload.is_empty() {
            return Err(AbortReason::Malformed);
        }
        let t = msg.t;
        let keys = self
            .sigma
            .begin_aggregation(msg.session_id, t)
            .map_err(|e| AbortReason::from(&e))?;
        if self.dataset.is_empty() {
            return Err(AbortReason::NoData);
        }
        let mut mv = local_train(
            &self.model,
            &self.dataset,
            &self.trainer,
            self.training_seed(t),
        )
        .map_err(|_| AbortReason::NoData)?;
        let bound = self.modulus.max_abs_component;
        for w in mv.weights.iter_mut() {
            *w = w.clamp(-bound, bound);
        }
        let me = self.hostname();
        let d = mv.weights.len();
        let masks: Vec<SignedMask> = keys
            .peers
            .iter()
            .map(|(peer, pos, secret)| SignedMask {
                mask: derive_pair_mask(secret, PairId::new(me, *peer), t, d, &self.modulus),
                sign: sign_for(keys.position, *pos),
            })
            .collect();
        let peers: Vec<Hostname> = keys.peers.iter().map(|p| p.0).collect();
        let masked = mask_update(me, &mv, &masks, &peers, t, &self.modulus)
            .map_err(|_| AbortReason::Masking)?;
        self.last_update = Some(mv);
        Ok(wire::encode_mpc_response(
            &masked.vector,
            masked.masked_count,
        ))
    }
}

impl From<SessionError> for AbortReason {
    fn from(e: SessionError) -> Self {
        AbortReason::from(&e)
    }
}
