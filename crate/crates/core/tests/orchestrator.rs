mod common;

use std::sync::{Arc, Mutex};

use common::*;
use fedsec_core::cost::{analytic_agg_cost, init_cost_exact, Phase, SizeProfile};
use fedsec_core::orchestrator::wire::{decode_container_batch, HEADER_LEN};
use fedsec_core::orchestrator::{
    AbortReason, Endpoint, MsgType, RoundOutcome, SimConfig, Simulation, TransportKind,
};
use fedsec_core::PartitionLaw;

fn cfg(k: usize, c: f64, d: usize) -> SimConfig {
    SimConfig {
        population: k,
        fraction: c,
        dim: d,
        seed: 7,
        samples_per_nf: 32,
        ..Default::default()
    }
}

fn tolerance(sim: &Simulation) -> f64 {
    2f64.powi(-(sim.config().frac_bits as i32) + 1)
}

#[test]
fn secure_rounds_match_plaintext_oracle() {
    let mut sim = Simulation::new(cfg(8, 0.5, 16)).unwrap();
    let mut prev = sim.global_model().to_vec();
    for _ in 0..6 {
        let r = sim.run_round().unwrap();
        assert_eq!(r.outcome, RoundOutcome::Completed);
        assert_eq!(r.selection.len(), 4);
        let oracle = oracle_round(&sim, &r, &prev);
        let got = r.aggregate.clone().unwrap();
        assert!(max_abs_diff(&got, &oracle) <= tolerance(&sim));
        // the decoded count is the exact sum of local dataset sizes
        let n: u64 = r
            .selection
            .iter()
            .map(|h| sim.node(h).unwrap().dataset().len() as u64)
            .sum();
        assert_eq!(r.total_count, Some(n));
        prev = got;
    }
    assert_eq!(sim.global_version(), 6);
}

#[test]
fn two_nf_round_is_their_mean() {
    let mut c = cfg(2, 1.0, 4);
    c.partition = PartitionLaw::Iid;
    let mut sim = Simulation::new(c).unwrap();
    let r = sim.run_round().unwrap();
    assert!(r.completed());
    // two NFs with different data: the result is their weighted mean
    let a = sim
        .node(&r.selection[0])
        .unwrap()
        .last_update()
        .unwrap()
        .clone();
    let b = sim
        .node(&r.selection[1])
        .unwrap()
        .last_update()
        .unwrap()
        .clone();
    let mean: Vec<f64> = a
        .weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x + y) / 2.0)
        .collect();
    assert!(max_abs_diff(r.aggregate.as_ref().unwrap(), &mean) <= tolerance(&sim));
}

#[test]
fn withheld_response_aborts_without_model_change() {
    let mut sim = Simulation::new(cfg(6, 1.0, 8)).unwrap();
    sim.run_round().unwrap();
    let before = sim.global_model().to_vec();
    let version = sim.global_version();
    let victim = sim.hosts()[2];
    let armed = Arc::new(Mutex::new(true));
    let flag = armed.clone();
    sim.set_interceptor(Box::new(DropWhen(
        move |m: &fedsec_core::orchestrator::FrameMeta| {
            *flag.lock().unwrap() && uplink_from(m, victim, MsgType::MpcInputResponse)
        },
    )));
    let r = sim.run_round().unwrap();
    assert_eq!(r.outcome, RoundOutcome::Aborted(AbortReason::Timeout));
    assert_eq!(sim.global_model(), before.as_slice());
    assert_eq!(sim.global_version(), version);
    assert!(r.aggregate.is_none());
    // no global update went out for the aborted round
    assert!(!sim
        .transcript()
        .iter()
        .any(|x| x.t == r.t && x.msg_type == MsgType::GlobalModelUpdate));
    *armed.lock().unwrap() = false;
    let next = sim.run_round().unwrap();
    assert!(next.completed());
    assert!(next.t > r.t);
}

#[test]
fn abort_mid_session_keeps_caches_consistent() {
    // drop one NF's first MPC request after others already aggregated
    let mut sim = Simulation::new(cfg(5, 1.0, 4)).unwrap();
    let victim = sim.hosts()[4];
    let armed = Arc::new(Mutex::new(true));
    let flag = armed.clone();
    sim.set_interceptor(Box::new(DropWhen(
        move |m: &fedsec_core::orchestrator::FrameMeta| {
            *flag.lock().unwrap()
                && m.to == Endpoint::Nf(victim)
                && m.msg_type == MsgType::MpcInputRequest
        },
    )));
    assert_eq!(
        sim.run_round().unwrap().outcome,
        RoundOutcome::Aborted(AbortReason::Timeout)
    );
    assert!(sim.nodes().all(|n| n.sigma().cache_len() == 0));
    *armed.lock().unwrap() = false;
    let r = sim.run_round().unwrap();
    assert!(r.completed());
    assert_eq!(r.exchanges, 10);
}

#[test]
fn reused_round_number_is_rejected() {
    let mut sim = Simulation::new(cfg(4, 1.0, 4)).unwrap();
    let r = sim.run_round().unwrap();
    assert!(r.completed());
    let again = sim.run_round_at(r.t).unwrap();
    assert_eq!(again.outcome, RoundOutcome::Aborted(AbortReason::Replay));
    let lower = sim.run_round_at(0).unwrap();
    assert_eq!(lower.outcome, RoundOutcome::Aborted(AbortReason::Replay));
    assert!(sim.run_round().unwrap().completed());
}

#[test]
fn below_threshold_round_is_refused_without_traffic() {
    let mut sim = Simulation::new(SimConfig {
        threshold: 3,
        ..cfg(4, 1.0, 4)
    })
    .unwrap();
    let hosts = sim.hosts();
    sim.unsubscribe(hosts[0]).unwrap();
    sim.unsubscribe(hosts[1]).unwrap();
    let rows = sim.ledger().rows().len();
    let r = sim.run_round().unwrap();
    assert_eq!(
        r.outcome,
        RoundOutcome::Aborted(AbortReason::BelowThreshold)
    );
    assert_eq!(sim.ledger().rows().len(), rows);
}

#[test]
fn unsubscribed_nf_leaves_selection_and_delivery() {
    let mut sim = Simulation::new(cfg(6, 1.0, 4)).unwrap();
    sim.run_round().unwrap();
    let gone = sim.hosts()[1];
    let received = sim.node(&gone).unwrap().updates_received();
    assert_eq!(received, 1);
    sim.unsubscribe(gone).unwrap();
    sim.subscribe(sim.hosts()[0]).unwrap();
    for _ in 0..3 {
        let r = sim.run_round().unwrap();
        assert!(r.completed());
        assert!(!r.selection.contains(&gone));
    }
    assert_eq!(sim.node(&gone).unwrap().updates_received(), received);
    assert!(sim
        .nodes()
        .filter(|n| n.hostname() != gone)
        .all(|n| n.updates_received() == 4));
}

#[test]
fn four_nf_session_has_36_container_transmissions() {
    let mut sim = Simulation::new(cfg(4, 1.0, 16)).unwrap();
    let seen = Arc::new(Mutex::new(0usize));
    let counter = seen.clone();
    sim.set_interceptor(Box::new(Rewrite(
        move |m: &fedsec_core::orchestrator::FrameMeta, f: &mut Vec<u8>| {
            if m.msg_type == MsgType::ContainerBatch {
                *counter.lock().unwrap() += decode_container_batch(&f[HEADER_LEN..]).unwrap().len();
            }
        },
    )));
    let r = sim.run_round().unwrap();
    assert!(r.completed());
    assert_eq!(r.exchanges, 6);
    assert_eq!(*seen.lock().unwrap(), 36);
    let p = SizeProfile::default();
    assert_eq!(r.init_bytes, init_cost_exact(4, 6, &p));
    assert_eq!(r.agg_bytes, analytic_agg_cost(16, 4, 4, &p));
    // second session over the same S: no SIGMA at all
    let r2 = sim.run_round().unwrap();
    assert_eq!(r2.exchanges, 0);
    assert_eq!(r2.init_bytes, init_cost_exact(4, 0, &p));
}

#[test]
fn ledger_accounts_for_every_frame() {
    let mut sim = Simulation::new(cfg(10, 0.4, 8)).unwrap();
    sim.run(8).unwrap();
    assert_eq!(sim.ledger().rows().len(), sim.transcript().len());
    assert_eq!(sim.ledger().total(), sim.bytes_carried());
    let p = SizeProfile::default();
    for r in sim.records() {
        assert!(r.completed());
        assert_eq!(
            r.init_bytes,
            init_cost_exact(r.selection.len() as u64, r.exchanges, &p)
        );
        assert_eq!(
            r.agg_bytes,
            analytic_agg_cost(8, 10, r.selection.len() as u64, &p)
        );
    }
    assert!(sim.ledger().rows().iter().all(|row| row.bytes > 0));
    assert!(sim.ledger().total_phase(Phase::Registration) > 0);
}

fn artifacts(c: SimConfig, rounds: u64) -> (String, String, String) {
    let mut sim = Simulation::new(c).unwrap();
    sim.run(rounds).unwrap();
    let mut t = Vec::new();
    sim.write_transcript(&mut t).unwrap();
    let mut l = Vec::new();
    sim.ledger().write_csv(&mut l).unwrap();
    let mut w = Vec::new();
    sim.write_trajectory(&mut w).unwrap();
    (
        String::from_utf8(t).unwrap(),
        String::from_utf8(l).unwrap(),
        String::from_utf8(w).unwrap(),
    )
}

#[test]
fn runs_are_deterministic_and_transport_invariant() {
    let a = artifacts(cfg(9, 0.5, 8), 5);
    let b = artifacts(cfg(9, 0.5, 8), 5);
    assert_eq!(a, b);
    let s = artifacts(
        SimConfig {
            transport: TransportKind::Socket,
            ..cfg(9, 0.5, 8)
        },
        5,
    );
    assert_eq!(a, s);
    let other = artifacts(
        SimConfig {
            seed: 8,
            ..cfg(9, 0.5, 8)
        },
        5,
    );
    assert_ne!(a.0, other.0);
}

#[test]
fn artifacts_written_to_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = Simulation::new(cfg(4, 1.0, 3)).unwrap();
    sim.run(2).unwrap();
    sim.write_artifacts(dir.path()).unwrap();
    let ledger = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert!(ledger.starts_with("round,phase,direction,msg_type,bytes\n"));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 3);
    assert!(traj.starts_with("round,t,outcome,version,w0,w1,w2\n"));
    assert!(
        std::fs::read_to_string(dir.path().join("transcript.log"))
            .unwrap()
            .lines()
            .count()
            > 10
    );
}
