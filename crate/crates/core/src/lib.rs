//! Secure federated aggregation for NWDA-style mobile networks: SIGMA key
//! establishment between NFs, pairwise additive masking mod `2^k`, an
//! orchestrated round loop with byte metering, and closed-form cost models.

pub mod cost;
pub mod crypto;
pub mod fl;
pub mod masking;
pub mod orchestrator;
pub mod sigma;

pub use cost::{CostLedger, Phase, SizeProfile};
pub use crypto::{Hostname, HOSTNAME_LEN};
pub use fl::{Dataset, LocalTrainer, PartitionLaw};
pub use masking::{MaskedUpdate, ModelVector, ModulusConfig};
pub use orchestrator::{
    AbortReason, RoundOutcome, RoundRecord, SimConfig, Simulation, TransportKind,
};
pub use sigma::SelectionList;
