use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ConfigError, SimConfig};
use super::derive_seed;
use super::node::NfNode;
use super::registry::{Capabilities, Registry, RegistryError};
use super::selection::{select_clients, SelectionError};
use super::transport::{
    make_transport, Endpoint, FrameMeta, Interceptor, PassThrough, Transport, Verdict,
};
use super::wire::{self, AbortReason, MsgType, WireMessage};
use crate::cost::{CostLedger, Direction, LedgerRow, Phase};
use crate::crypto::{CertificateStore, Hostname, Pki};
use crate::fl::{generate_task, SyntheticTask};
use crate::masking::{decode_aggregate, sum_masked, MaskedUpdate, ModulusConfig};
use crate::sigma::{ContainerRouter, SelectionList};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("transport failure: {0}")]
    Transport(#[from] io::Error),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundOutcome {
    Completed,
    Aborted(AbortReason),
}

impl fmt::Display for RoundOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundOutcome::Completed => f.write_str("completed"),
            RoundOutcome::Aborted(r) => write!(f, "aborted({r})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub t: u64,
    pub session_id: u32,
    pub selection: Vec<Hostname>,
    /// SIGMA runs started this round (msg1 containers on the first leg)
    pub exchanges: u64,
    pub masked_updates: Vec<MaskedUpdate>,
    pub aggregate: Option<Vec<f64>>,
    pub total_count: Option<u64>,
    pub global_version: u64,
    pub init_bytes: u64,
    pub agg_bytes: u64,
    pub outcome: RoundOutcome,
}

impl RoundRecord {
    pub fn completed(&self) -> bool {
        self.outcome == RoundOutcome::Completed
    }
}

/// One line of `transcript.log`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub time_us: u64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub msg_type: MsgType,
    pub session_id: u32,
    pub t: u64,
    pub bytes: usize,
    pub digest: [u8; 8],
    pub note: Option<&'static str>,
}

impl fmt::Display for TranscriptRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:06} {:>10}us {} -> {} {} sid={} t={} bytes={} sha256={}",
            self.seq,
            self.time_us,
            self.from,
            self.to,
            self.msg_type,
            self.session_id,
            self.t,
            self.bytes,
            hex::encode(self.digest)
        )?;
        if let Some(n) = self.note {
            write!(f, " [{n}]")?;
        }
        Ok(())
    }
}

/// FedAvg full replacement: the new global model is the decoded aggregate.
pub fn global_update_rule(_current: &[f64], aggregate: Vec<f64>) -> Vec<f64> {
    aggregate
}

struct Delivered {
    from: Hostname,
    msg: WireMessage,
}

/// NWDAF, NRF and NF actors wired over one transport.
pub struct Simulation {
    cfg: SimConfig,
    modulus: ModulusConfig,
    store: CertificateStore,
    task: SyntheticTask,
    nodes: BTreeMap<Hostname, NfNode>,
    registry: Registry,
    global: Vec<f64>,
    version: u64,
    session_id: u32,
    next_t: u64,
    select_rng: ChaCha8Rng,
    sched_rng: ChaCha8Rng,
    transport: Box<dyn Transport>,
    interceptor: Box<dyn Interceptor>,
    ledger: CostLedger,
    transcript: Vec<TranscriptRecord>,
    clock_us: u64,
    seq: u64,
    records: Vec<RoundRecord>,
}

impl Simulation {
    /// Issues identities, builds the task and has every NF register and
    /// subscribe over the transport.
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let modulus = cfg.modulus();
        let mut pki_rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, "pki", 0));
        let mut pki = Pki::new(&mut pki_rng);
        let total = cfg.samples_per_nf * cfg.population;
        let (task, datasets) = generate_task(
            derive_seed(cfg.seed, "task", 0),
            cfg.dim,
            cfg.population,
            total,
            cfg.noise_std,
            cfg.partition,
        )
        .map_err(|e| SimError::Setup(e.to_string()))?;
        let mut cap_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "capabilities", 0));
        let mut nodes = BTreeMap::new();
        for (i, data) in datasets.into_iter().enumerate() {
            let name = Hostname::for_index(i as u32, &cfg.domain)
                .map_err(|e| SimError::Setup(e.to_string()))?;
            let identity = pki
                .issue(name.as_str(), &mut pki_rng)
                .map_err(|e| SimError::Setup(e.to_string()))?;
            let caps = Capabilities {
                has_gpu: cap_rng.gen_bool(0.5),
                supported_model_kinds: vec!["linear".into()],
                traffic_load: cap_rng.gen_range(0..=100),
            };
            let node = NfNode::new(
                crate::sigma::SigmaEndpoint::new(identity, cfg.threshold),
                caps,
                data,
                cfg.trainer(),
                modulus,
                cfg.dim,
                ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, "nf-rng", i as u64)),
                derive_seed(cfg.seed, "nf-train", i as u64),
            );
            nodes.insert(name, node);
        }
        let store = pki.store().clone();
        let mut sim = Self {
            registry: Registry::new(nodes.keys().copied()),
            global: vec![0.0; cfg.dim],
            version: 0,
            session_id: 0,
            next_t: 1,
            select_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "select", 0)),
            sched_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "schedule", 0)),
            transport: make_transport(cfg.transport)?,
            interceptor: Box::new(PassThrough),
            ledger: CostLedger::new(),
            transcript: Vec::new(),
            clock_us: 0,
            seq: 0,
            records: Vec::new(),
            cfg,
            modulus,
            store,
            task,
            nodes,
        };
        let hosts: Vec<Hostname> = sim.nodes.keys().copied().collect();
        for h in &hosts {
            let profile = sim.nodes[h].profile();
            let msg = WireMessage::new(MsgType::Register, 0, 0, wire::encode_register(&profile));
            if let Some(m) = sim.uplink(*h, &msg, None, Phase::Registration)? {
                let p = wire::decode_register(&m.payload)
                    .map_err(|e| SimError::Setup(e.to_string()))?;
                if p.hostname != *h {
                    return Err(SimError::Setup(format!("{h} registered as {}", p.hostname)));
                }
                sim.registry.register(p)?;
            }
        }
        for h in &hosts {
            sim.subscribe(*h)?;
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn set_interceptor(&mut self, i: Box<dyn Interceptor>) {
        self.interceptor = i;
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }

    pub fn certificates(&self) -> &CertificateStore {
        &self.store
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn node(&self, h: &Hostname) -> Option<&NfNode> {
        self.nodes.get(h)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NfNode> {
        self.nodes.values()
    }

    pub fn hosts(&self) -> Vec<Hostname> {
        self.nodes.keys().copied().collect()
    }

    pub fn global_model(&self) -> &[f64] {
        &self.global
    }

    pub fn global_version(&self) -> u64 {
        self.version
    }

    pub fn next_t(&self) -> u64 {
        self.next_t
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn transcript(&self) -> &[TranscriptRecord] {
        &self.transcript
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn bytes_carried(&self) -> u64 {
        self.transport.bytes_carried()
    }

    pub fn subscribe(&mut self, h: Hostname) -> Result<(), SimError> {
        self.registry_message(h, MsgType::Subscribe)
    }

    pub fn unsubscribe(&mut self, h: Hostname) -> Result<(), SimError> {
        self.registry_message(h, MsgType::Unsubscribe)
    }

    fn registry_message(&mut self, h: Hostname, ty: MsgType) -> Result<(), SimError> {
        if !self.nodes.contains_key(&h) {
            return Err(RegistryError::Unknown(h).into());
        }
        let msg = WireMessage::new(ty, 0, 0, wire::encode_hostname(&h));
        if let Some(m) = self.uplink(h, &msg, None, Phase::Registration)? {
            let claimed =
                wire::decode_hostname(&m.payload).map_err(|e| SimError::Setup(e.to_string()))?;
            if claimed != h {
                return Err(SimError::Setup(format!("{h} sent a request for {claimed}")));
            }
            match ty {
                MsgType::Subscribe => self.registry.subscribe(h)?,
                _ => self.registry.unsubscribe(h)?,
            }
        }
        Ok(())
    }

    fn latency(&mut self) -> u64 {
        self.sched_rng
            .gen_range(self.cfg.min_latency_us..=self.cfg.max_latency_us)
    }

    /// Meters, carries and intercepts one frame. Returns the bytes the
    /// receiver gets, or `None` if the frame was dropped.
    fn carry(
        &mut self,
        from: Endpoint,
        to: Endpoint,
        msg: &WireMessage,
        round: Option<u64>,
        phase: Phase,
        time_us: u64,
    ) -> Result<Option<Vec<u8>>, SimError> {
        let bytes = msg.encode();
        let direction = if from == Endpoint::Nwdaf {
            Direction::Downlink
        } else {
            Direction::Uplink
        };
        self.ledger.record(LedgerRow {
            round,
            phase,
            direction,
            msg_type: msg.msg_type,
            bytes: bytes.len() as u64,
        });
        let digest: [u8; 8] = Sha256::digest(&bytes)[..8].try_into().expect("8 bytes");
        let sent_len = bytes.len();
        self.transport.send(from, to, bytes)?;
        let mut frame = self.transport.recv(from, to)?;
        let before = frame.clone();
        let meta = FrameMeta {
            seq: self.seq,
            from,
            to,
            msg_type: msg.msg_type,
            round,
            phase,
        };
        let verdict = self.interceptor.intercept(&meta, &mut frame);
        let note = match verdict {
            Verdict::Drop => Some("dropped"),
            Verdict::Deliver if frame != before => Some("altered"),
            Verdict::Deliver => None,
        };
        self.transcript.push(TranscriptRecord {
            seq: self.seq,
            time_us,
            from,
            to,
            msg_type: msg.msg_type,
            session_id: msg.session_id,
            t: msg.t,
            bytes: sent_len,
            digest,
            note,
        });
        self.seq += 1;
        Ok((verdict == Verdict::Deliver).then_some(frame))
    }

    /// NF to NWDAF frame outside a round; returns what the NWDAF decoded.
    fn uplink(
        &mut self,
        from: Hostname,
        msg: &WireMessage,
        round: Option<u64>,
        phase: Phase,
    ) -> Result<Option<WireMessage>, SimError> {
        let at = self.clock_us + self.latency();
        self.clock_us = at;
        Ok(self
            .carry(Endpoint::Nf(from), Endpoint::Nwdaf, msg, round, phase, at)?
            .and_then(|f| WireMessage::decode(&f).ok()))
    }

    /// Sends one request per destination and collects the replies in arrival
    /// order. Fails on any missing, undecodable or abort reply.
    fn exchange(
        &mut self,
        t: u64,
        phase: Phase,
        requests: Vec<(Hostname, WireMessage)>,
    ) -> Result<Result<Vec<Delivered>, AbortReason>, SimError> {
        let start = self.clock_us;
        let expected = requests.len();
        let mut pending = Vec::with_capacity(expected);
        for (dst, msg) in requests {
            let at = start + self.latency();
            let Some(frame) =
                self.carry(Endpoint::Nwdaf, Endpoint::Nf(dst), &msg, Some(t), phase, at)?
            else {
                continue;
            };
            let node = self.nodes.get_mut(&dst).expect("selected NFs exist");
            let reply = match WireMessage::decode(&frame) {
                Ok(m) => node.handle(&m, &self.store),
                Err(_) => Some(WireMessage::new(
                    MsgType::Abort,
                    msg.session_id,
                    msg.t,
                    vec![AbortReason::Malformed as u8],
                )),
            };
            if let Some(r) = reply {
                let back = at + self.latency();
                pending.push((back, dst, r));
            }
        }
        pending.sort_by_key(|(at, h, _)| (*at, *h));
        let mut delivered = Vec::with_capacity(pending.len());
        let mut finish = start;
        let mut failure = None;
        for (at, src, msg) in pending {
            finish = finish.max(at);
            let Some(frame) =
                self.carry(Endpoint::Nf(src), Endpoint::Nwdaf, &msg, Some(t), phase, at)?
            else {
                continue;
            };
            match WireMessage::decode(&frame) {
                Ok(m) if m.msg_type == MsgType::Abort => {
                    let reason = wire::decode_abort(&m.payload).unwrap_or(AbortReason::Malformed);
                    failure.get_or_insert(reason);
                }
                Ok(m) => delivered.push(Delivered { from: src, msg: m }),
                Err(_) => {
                    failure.get_or_insert(AbortReason::Malformed);
                }
            }
        }
        if let Some(reason) = failure {
            self.clock_us = finish;
            return Ok(Err(reason));
        }
        if delivered.len() < expected {
            self.clock_us = start + self.cfg.timeout_ms * 1000;
            return Ok(Err(AbortReason::Timeout));
        }
        self.clock_us = finish;
        Ok(Ok(delivered))
    }

    fn check_reply(d: &Delivered, ty: MsgType, sid: u32, t: u64) -> Result<(), AbortReason> {
        if d.msg.msg_type != ty {
            return Err(AbortReason::Protocol);
        }
        if d.msg.session_id != sid || d.msg.t != t {
            return Err(AbortReason::SessionMismatch);
        }
        Ok(())
    }

    /// Runs the next round with a fresh `t`.
    pub fn run_round(&mut self) -> Result<RoundRecord, SimError> {
        self.run_round_at(self.next_t)
    }

    pub fn run(&mut self, rounds: u64) -> Result<Vec<RoundRecord>, SimError> {
        (0..rounds).map(|_| self.run_round()).collect()
    }

    /// Runs one round with the given `t`. The NWDAF does not police `t`; the
    /// NFs' replay counters do.
    pub fn run_round_at(&mut self, t: u64) -> Result<RoundRecord, SimError> {
        self.next_t = self.next_t.max(t.saturating_add(1));
        self.session_id = self.session_id.wrapping_add(1);
        let sid = self.session_id;
        let mut record = RoundRecord {
            t,
            session_id: sid,
            selection: Vec::new(),
            exchanges: 0,
            masked_updates: Vec::new(),
            aggregate: None,
            total_count: None,
            global_version: self.version,
            init_bytes: 0,
            agg_bytes: 0,
            outcome: RoundOutcome::Completed,
        };
        let strategy = self.cfg.strategy();
        let selection = match select_clients(
            &self.registry,
            &strategy,
            self.cfg.fraction,
            self.cfg.threshold,
            &mut self.select_rng,
        ) {
            Ok(s) => s,
            Err(SelectionError::BelowThreshold { .. }) => {
                record.outcome = RoundOutcome::Aborted(AbortReason::BelowThreshold);
                self.records.push(record.clone());
                return Ok(record);
            }
            Err(e @ SelectionError::InvalidFraction(_)) => {
                return Err(SimError::Setup(e.to_string()))
            }
        };
        record.selection = selection.hosts().to_vec();

        let outcome = match self.init_phase(sid, t, &selection, &mut record)? {
            Err(reason) => Err((reason, Phase::Init)),
            Ok(()) => self
                .aggregation_phase(sid, t, &selection, &mut record)?
                .map_err(|r| (r, Phase::Aggregation)),
        };
        if let Err((reason, phase)) = outcome {
            record.outcome = RoundOutcome::Aborted(reason);
            for h in selection.hosts().to_vec() {
                let msg = WireMessage::new(MsgType::Abort, sid, t, vec![reason as u8]);
                let at = self.clock_us + self.latency();
                if let Some(frame) =
                    self.carry(Endpoint::Nwdaf, Endpoint::Nf(h), &msg, Some(t), phase, at)?
                {
                    if let Ok(m) = WireMessage::decode(&frame) {
                        self.nodes
                            .get_mut(&h)
                            .expect("member")
                            .handle(&m, &self.store);
                    }
                }
            }
        }
        record.init_bytes = self.ledger.round_phase(t, Phase::Init);
        record.agg_bytes = self.ledger.round_phase(t, Phase::Aggregation);
        record.global_version = self.version;
        self.records.push(record.clone());
        Ok(record)
    }

    fn init_phase(
        &mut self,
        sid: u32,
        t: u64,
        selection: &SelectionList,
        record: &mut RoundRecord,
    ) -> Result<Result<(), AbortReason>, SimError> {
        let payload = wire::encode_key_setup(selection.hosts());
        let requests = selection
            .iter()
            .map(|h| {
                (
                    *h,
                    WireMessage::new(MsgType::KeySetupRequest, sid, t, payload.clone()),
                )
            })
            .collect();
        let mut replies = match self.exchange(t, Phase::Init, requests)? {
            Ok(r) => r,
            Err(reason) => return Ok(Err(reason)),
        };
        for leg in 0..=3 {
            let mut router = ContainerRouter::new(selection.clone());
            for d in replies {
                if let Err(r) = Self::check_reply(&d, MsgType::ContainerBatch, sid, t) {
                    return Ok(Err(r));
                }
                let batch = match wire::decode_container_batch(&d.msg.payload) {
                    Ok(b) => b,
                    Err(_) => return Ok(Err(AbortReason::Malformed)),
                };
                if let Err(e) = router.accept(d.from, batch) {
                    return Ok(Err(AbortReason::from(&e)));
                }
            }
            let count = router.container_count() as u64;
            if leg == 0 {
                record.exchanges = count;
            }
            if count == 0 {
                // either nothing to set up, or the final acknowledgement leg
                if leg == 0 || leg == 3 {
                    return Ok(Ok(()));
                }
                return Ok(Err(AbortReason::MissingContainer));
            }
            if leg == 3 {
                return Ok(Err(AbortReason::UnexpectedContainer));
            }
            let routed = match router.route() {
                Ok(r) => r,
                Err(e) => return Ok(Err(AbortReason::from(&e))),
            };
            let requests = routed
                .into_iter()
                .map(|(h, b)| {
                    (
                        h,
                        WireMessage::new(
                            MsgType::ContainerBatch,
                            sid,
                            t,
                            wire::encode_container_batch(&b),
                        ),
                    )
                })
                .collect();
            replies = match self.exchange(t, Phase::Init, requests)? {
                Ok(r) => r,
                Err(reason) => return Ok(Err(reason)),
            };
        }
        unreachable!("leg 3 always returns")
    }

    fn aggregation_phase(
        &mut self,
        sid: u32,
        t: u64,
        selection: &SelectionList,
        record: &mut RoundRecord,
    ) -> Result<Result<(), AbortReason>, SimError> {
        let requests = selection
            .iter()
            .map(|h| {
                (
                    *h,
                    WireMessage::new(MsgType::MpcInputRequest, sid, t, Vec::new()),
                )
            })
            .collect();
        let replies = match self.exchange(t, Phase::Aggregation, requests)? {
            Ok(r) => r,
            Err(reason) => return Ok(Err(reason)),
        };
        let mut updates = Vec::with_capacity(replies.len());
        for d in &replies {
            if let Err(r) = Self::check_reply(d, MsgType::MpcInputResponse, sid, t) {
                return Ok(Err(r));
            }
            let Ok((vector, masked_count)) = wire::decode_mpc_response(&d.msg.payload) else {
                return Ok(Err(AbortReason::Malformed));
            };
            if vector.len() != self.cfg.dim {
                return Ok(Err(AbortReason::Malformed));
            }
            updates.push(MaskedUpdate {
                vector,
                masked_count,
                round: t,
                sender: d.from,
            });
        }
        let decoded = sum_masked(&updates, selection.hosts(), &self.modulus)
            .and_then(|agg| decode_aggregate(&agg, &self.modulus).map(|v| (v, agg.total_count)));
        let (aggregate, total) = match decoded {
            Ok(x) => x,
            Err(_) => return Ok(Err(AbortReason::Masking)),
        };
        record.masked_updates = updates;
        record.total_count = Some(total);
        let current = std::mem::take(&mut self.global);
        self.global = global_update_rule(&current, aggregate);
        record.aggregate = Some(self.global.clone());
        self.version += 1;

        let weights: Vec<f32> = self.global.iter().map(|&w| w as f32).collect();
        let payload = wire::encode_global_update(&weights);
        let start = self.clock_us;
        for h in self.registry.subscribers() {
            let msg = WireMessage::new(MsgType::GlobalModelUpdate, sid, t, payload.clone());
            let at = start + self.latency();
            self.clock_us = self.clock_us.max(at);
            if let Some(frame) = self.carry(
                Endpoint::Nwdaf,
                Endpoint::Nf(h),
                &msg,
                Some(t),
                Phase::Aggregation,
                at,
            )? {
                if let Ok(m) = WireMessage::decode(&frame) {
                    self.nodes
                        .get_mut(&h)
                        .expect("subscriber")
                        .handle(&m, &self.store);
                }
            }
        }
        Ok(Ok(()))
    }

    pub fn write_transcript<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.transcript {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    /// `round,t,outcome,version,w0..w{d-1}` for every round.
    pub fn write_trajectory<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![
            "round".to_string(),
            "t".into(),
            "outcome".into(),
            "version".into(),
        ];
        header.extend((0..self.cfg.dim).map(|i| format!("w{i}")));
        out.write_record(&header)?;
        let mut model = vec![0.0; self.cfg.dim];
        for (i, r) in self.records.iter().enumerate() {
            if let Some(a) = &r.aggregate {
                model.clone_from(a);
            }
            let mut row = vec![
                (i + 1).to_string(),
                r.t.to_string(),
                r.outcome.to_string(),
                r.global_version.to_string(),
            ];
            row.extend(model.iter().map(|w| format!("{w:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `transcript.log`, `ledger.csv` and `trajectory.csv` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_transcript(io::BufWriter::new(std::fs::File::create(
            dir.join("transcript.log"),
        )?))?;
        self.ledger
            .write_csv(std::fs::File::create(dir.join("ledger.csv"))?)
            .map_err(io::Error::other)?;
        self.write_trajectory(std::fs::File::create(dir.join("trajectory.csv"))?)
            .map_err(io::Error::other)?;
        Ok(())
    }
}
