//! Deliberate protocol faults, applied from outside the protocol code.

use std::fmt;
use std::str::FromStr;

use fedsec_core::orchestrator::wire::{decode_container_batch, encode_container_batch};
use fedsec_core::orchestrator::{Endpoint, FrameMeta, Interceptor, MsgType, Verdict, WireMessage};
use fedsec_core::sigma::{MSG2_LEN, MSG3_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// flip a bit in the first msg2 signature
    TamperSig,
    /// flip a bit in the first msg3 MAC
    TamperMac,
    /// rerun the second round with the first round's t
    ReuseT,
    /// drop the first masked update
    DropUpdate,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tamper-sig" => Ok(Fault::TamperSig),
            "tamper-mac" => Ok(Fault::TamperMac),
            "reuse-t" => Ok(Fault::ReuseT),
            "drop-update" => Ok(Fault::DropUpdate),
            other => Err(format!(
                "unknown fault {other:?} (tamper-sig, tamper-mac, reuse-t, drop-update)"
            )),
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fault::TamperSig => "tamper-sig",
            Fault::TamperMac => "tamper-mac",
            Fault::ReuseT => "reuse-t",
            Fault::DropUpdate => "drop-update",
        })
    }
}

/// Interceptor for the wire-level faults. Fires once.
pub struct FaultInjector {
    fault: Fault,
    fired: bool,
}

impl FaultInjector {
    pub fn new(fault: Fault) -> Self {
        Self {
            fault,
            fired: false,
        }
    }

    /// Flips one bit at `offset` within the first container of `len` bytes.
    fn flip_in_batch(frame: &mut Vec<u8>, len: usize, offset: usize) -> bool {
        let Ok(msg) = WireMessage::decode(frame) else {
            return false;
        };
        let Ok(mut batch) = decode_container_batch(&msg.payload) else {
            return false;
        };
        let Some(c) = batch.iter_mut().find(|c| c.payload.len() == len) else {
            return false;
        };
        c.payload[offset] ^= 0x10;
        *frame = WireMessage::new(
            msg.msg_type,
            msg.session_id,
            msg.t,
            encode_container_batch(&batch),
        )
        .encode();
        true
    }
}

impl Interceptor for FaultInjector {
    fn intercept(&mut self, meta: &FrameMeta, frame: &mut Vec<u8>) -> Verdict {
        if self.fired {
            return Verdict::Deliver;
        }
        let uplink = meta.to == Endpoint::Nwdaf;
        match self.fault {
            Fault::TamperSig if uplink && meta.msg_type == MsgType::ContainerBatch => {
                // msg2 = g^y | sig | mac
                self.fired = Self::flip_in_batch(frame, MSG2_LEN, 40);
            }
            Fault::TamperMac if uplink && meta.msg_type == MsgType::ContainerBatch => {
                // msg3 = sig | mac
                self.fired = Self::flip_in_batch(frame, MSG3_LEN, MSG3_LEN - 3);
            }
            Fault::DropUpdate if meta.msg_type == MsgType::MpcInputResponse => {
                self.fired = true;
                return Verdict::Drop;
            }
            _ => {}
        }
        Verdict::Deliver
    }
}
