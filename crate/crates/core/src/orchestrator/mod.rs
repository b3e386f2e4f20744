//! NWDA-style orchestration: NRF registry, client selection, NF actors and
//! the NWDAF round loop over a metered transport.

mod config;
mod node;
mod registry;
mod selection;
mod sim;
mod transport;
pub mod wire;

pub use config::{ConfigError, SimConfig, StrategyKind};
pub use node::NfNode;
pub use registry::{Capabilities, NfProfile, Registry, RegistryError};
pub use selection::{
    select_clients, selection_size, CapabilityFilter, SelectionError, SelectionStrategy,
};
pub use sim::{
    global_update_rule, RoundOutcome, RoundRecord, SimError, Simulation, TranscriptRecord,
};
pub use transport::{
    make_transport, Bus, Endpoint, FrameMeta, Interceptor, PassThrough, SocketTransport, Transport,
    TransportKind, Verdict,
};
pub use wire::{AbortReason, MsgType, WireError, WireMessage};

use sha2::{Digest, Sha256};

/// Independent 64-bit seed for a labelled sub-stream.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update((label.len() as u32).to_be_bytes());
    h.update(label.as_bytes());
    h.update(index.to_be_bytes());
    u64::from_be_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
