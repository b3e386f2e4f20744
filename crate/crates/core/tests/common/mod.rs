#![allow(dead_code)]

use fedsec_core::fl::{local_train, plaintext_fedavg};
use fedsec_core::orchestrator::{Endpoint, FrameMeta, Interceptor, MsgType, Verdict};
use fedsec_core::{Hostname, RoundRecord, Simulation};

/// Plaintext FedAvg of one round, fed the binary32 global model every NF
/// received before the round.
pub fn oracle_round(sim: &Simulation, record: &RoundRecord, prev_global: &[f64]) -> Vec<f64> {
    let model: Vec<f64> = prev_global.iter().map(|&w| w as f32 as f64).collect();
    let updates: Vec<_> = record
        .selection
        .iter()
        .map(|h| {
            let node = sim.node(h).unwrap();
            let mut mv = local_train(
                &model,
                node.dataset(),
                node.trainer(),
                node.training_seed(record.t),
            )
            .unwrap();
            let bound = sim.config().max_abs_component;
            mv.weights
                .iter_mut()
                .for_each(|w| *w = w.clamp(-bound, bound));
            mv
        })
        .collect();
    plaintext_fedavg(&updates).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Drops every frame matching the predicate.
pub struct DropWhen<F>(pub F);

impl<F: FnMut(&FrameMeta) -> bool + Send> Interceptor for DropWhen<F> {
    fn intercept(&mut self, meta: &FrameMeta, _: &mut Vec<u8>) -> Verdict {
        if (self.0)(meta) {
            Verdict::Drop
        } else {
            Verdict::Deliver
        }
    }
}

/// Rewrites frames matching the predicate with the given closure.
pub struct Rewrite<F>(pub F);

impl<F: FnMut(&FrameMeta, &mut Vec<u8>) + Send> Interceptor for Rewrite<F> {
    fn intercept(&mut self, meta: &FrameMeta, frame: &mut Vec<u8>) -> Verdict {
        (self.0)(meta, frame);
        Verdict::Deliver
    }
}

pub fn uplink_from(meta: &FrameMeta, h: Hostname, ty: MsgType) -> bool {
    meta.from == Endpoint::Nf(h) && meta.msg_type == ty
}
