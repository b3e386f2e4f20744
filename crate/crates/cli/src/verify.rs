//! Property suites behind `fedsec verify`.

use fedsec_core::cost::{
    analytic_agg_cost, init_cost_exact, monte_carlo_exchange_frequency, p_key_exchange, Phase,
    SizeProfile,
};
use fedsec_core::fl::{local_train, plaintext_fedavg};
use fedsec_core::orchestrator::{
    selection_size, AbortReason, FrameMeta, Interceptor, MsgType, RoundOutcome, Verdict,
};
use fedsec_core::{RoundRecord, SimConfig, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::faults::{Fault, FaultInjector};

#[derive(Debug, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn result(suite: &'static str, r: Result<String, String>) -> SuiteResult {
    match r {
        Ok(detail) => SuiteResult {
            suite,
            pass: true,
            detail,
        },
        Err(detail) => SuiteResult {
            suite,
            pass: false,
            detail,
        },
    }
}

fn sim(cfg: SimConfig) -> Result<Simulation, String> {
    Simulation::new(cfg).map_err(|e| e.to_string())
}

fn round(s: &mut Simulation) -> Result<RoundRecord, String> {
    s.run_round().map_err(|e| e.to_string())
}

fn small(seed: u64, k: usize, c: f64, d: usize) -> SimConfig {
    SimConfig {
        population: k,
        fraction: c,
        dim: d,
        seed,
        samples_per_nf: 16,
        ..Default::default()
    }
}

/// Runs two rounds of `base` with `fault` applied and reports how the
/// protocol reacted. Any abort counts as a failed run.
fn injected_run(base: &SimConfig, fault: Fault) -> Result<String, String> {
    let mut s = sim(base.clone())?;
    if fault != Fault::ReuseT {
        s.set_interceptor(Box::new(FaultInjector::new(fault)));
    }
    let first = round(&mut s)?;
    let second = match fault {
        Fault::ReuseT => s.run_round_at(first.t).map_err(|e| e.to_string())?,
        _ => round(&mut s)?,
    };
    for r in [&first, &second] {
        if let RoundOutcome::Aborted(reason) = r.outcome {
            return Err(format!(
                "injected {fault}: round t={} aborted with reason {reason}",
                r.t
            ));
        }
    }
    Ok(format!("injected {fault}: both rounds completed"))
}

pub fn cancellation(seed: u64, fault: Option<Fault>, base: &SimConfig) -> SuiteResult {
    let run = || -> Result<String, String> {
        if let Some(f @ Fault::DropUpdate) = fault {
            return injected_run(base, f);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for i in 0..10 {
            let k = rng.gen_range(4..=16);
            let c = [0.25, 0.5, 1.0][rng.gen_range(0..3)];
            let mut cfg = small(seed + i, k, c, rng.gen_range(4..=64));
            cfg.threshold = selection_size(c, k).min(2);
            let tol = 2f64.powi(-(cfg.frac_bits as i32) + 1);
            let mut s = sim(cfg)?;
            let mut prev = vec![0.0; s.config().dim];
            for _ in 0..3 {
                let r = round(&mut s)?;
                let got = r
                    .aggregate
                    .clone()
                    .ok_or_else(|| format!("round aborted: {}", r.outcome))?;
                let model: Vec<f64> = prev.iter().map(|&w| w as f32 as f64).collect();
                let locals = r
                    .selection
                    .iter()
                    .map(|h| {
                        let n = s.node(h).expect("selected");
                        local_train(&model, n.dataset(), n.trainer(), n.training_seed(r.t))
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())?;
                let want = plaintext_fedavg(&locals).map_err(|e| e.to_string())?;
                let gap = got
                    .iter()
                    .zip(&want)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if gap > tol {
                    return Err(format!("config {i}: gap {gap:e} > {tol:e}"));
                }
                worst = worst.max(gap);
                prev = got;
            }
        }
        Ok(format!("10 configs x 3 rounds, max gap {worst:.2e}"))
    };
    result("cancellation", run())
}

struct FlipNth {
    target: usize,
    seen: usize,
    rng: ChaCha8Rng,
}

impl Interceptor for FlipNth {
    fn intercept(&mut self, meta: &FrameMeta, frame: &mut Vec<u8>) -> Verdict {
        if meta.msg_type == MsgType::ContainerBatch {
            if self.seen == self.target {
                let bit = self.rng.gen_range(0..frame.len() * 8);
                frame[bit / 8] ^= 1 << (bit % 8);
            }
            self.seen += 1;
        }
        Verdict::Deliver
    }
}

pub fn tamper(seed: u64, fault: Option<Fault>, base: &SimConfig) -> SuiteResult {
    let run = || -> Result<String, String> {
        if let Some(f @ (Fault::TamperSig | Fault::TamperMac)) = fault {
            return injected_run(base, f);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trials = 100;
        for i in 0..trials {
            let k = rng.gen_range(3..=5);
            let mut s = sim(small(seed + i, k, 1.0, 4))?;
            let target = rng.gen_range(0..7 * k);
            s.set_interceptor(Box::new(FlipNth {
                target,
                seen: 0,
                rng: ChaCha8Rng::seed_from_u64(rng.gen()),
            }));
            let r = round(&mut s)?;
            if r.completed() {
                return Err(format!("trial {i}: tampered round accepted"));
            }
        }
        Ok(format!(
            "{trials} single-bit flips on SIGMA legs, all aborted"
        ))
    };
    result("tamper", run())
}

pub fn replay(seed: u64, fault: Option<Fault>, base: &SimConfig) -> SuiteResult {
    let run = || -> Result<String, String> {
        if let Some(f @ Fault::ReuseT) = fault {
            return injected_run(base, f);
        }
        for t1 in 0..=10u64 {
            for t2 in 0..=10u64 {
                let mut s = sim(small(seed + t1 * 11 + t2, 3, 1.0, 2))?;
                let a = s.run_round_at(t1).map_err(|e| e.to_string())?;
                let b = s.run_round_at(t2).map_err(|e| e.to_string())?;
                let want = if t2 > t1 {
                    RoundOutcome::Completed
                } else {
                    RoundOutcome::Aborted(AbortReason::Replay)
                };
                if !a.completed() || b.outcome != want {
                    return Err(format!("t1={t1} t2={t2}: {} / {}", a.outcome, b.outcome));
                }
            }
        }
        Ok("121 (t1, t2) pairs: only strictly greater t accepted".into())
    };
    result("replay", run())
}

pub fn threshold(seed: u64) -> SuiteResult {
    let run = || -> Result<String, String> {
        let bad = SimConfig {
            population: 10,
            fraction: 0.1,
            threshold: 2,
            ..Default::default()
        };
        if bad.validate().is_ok() {
            return Err("config with ceil(C*K) < threshold accepted".into());
        }
        let mut s = sim(SimConfig {
            threshold: 3,
            ..small(seed, 4, 1.0, 2)
        })?;
        let hosts = s.hosts();
        for h in &hosts[..2] {
            s.unsubscribe(*h).map_err(|e| e.to_string())?;
        }
        let rows = s.ledger().rows().len();
        let r = round(&mut s)?;
        if r.outcome != RoundOutcome::Aborted(AbortReason::BelowThreshold)
            || s.ledger().rows().len() != rows
        {
            return Err(format!("round with 2 < 3 members: {}", r.outcome));
        }
        Ok("refused by config validation and by the NWDAF".into())
    };
    result("threshold", run())
}

pub fn analytic(seed: u64) -> SuiteResult {
    let run = || -> Result<String, String> {
        let p = SizeProfile::default();
        let mut rounds = 0;
        for (i, &(k, c, d)) in [(4, 1.0, 16), (8, 0.5, 32), (12, 0.25, 8), (16, 0.5, 128)]
            .iter()
            .enumerate()
        {
            let mut s = sim(small(seed + i as u64, k, c, d))?;
            for _ in 0..4 {
                let r = round(&mut s)?;
                let k_s = r.selection.len() as u64;
                let init = s.ledger().round_phase(r.t, Phase::Init);
                let agg = s.ledger().round_phase(r.t, Phase::Aggregation);
                if init != init_cost_exact(k_s, r.exchanges, &p)
                    || agg != analytic_agg_cost(d as u64, k as u64, k_s, &p)
                {
                    return Err(format!(
                        "config {i} t={}: ledger {init}/{agg} differs from closed form",
                        r.t
                    ));
                }
                rounds += 1;
            }
            if s.ledger().total() != s.bytes_carried() {
                return Err(format!(
                    "config {i}: ledger total differs from bytes carried"
                ));
            }
        }
        Ok(format!("{rounds} rounds, exact byte equality"))
    };
    result("analytic=empirical", run())
}

pub fn probability(seed: u64) -> SuiteResult {
    let run = || -> Result<String, String> {
        let trials = 10_000;
        let mut parts = Vec::new();
        for t in [1u64, 5, 20] {
            let est = monte_carlo_exchange_frequency(100, 10, t, trials, seed + t)
                .map_err(|e| e.to_string())?;
            let p = p_key_exchange(100, 10, t).map_err(|e| e.to_string())?;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            let z = (est - p).abs() / se;
            if z > 3.0 {
                return Err(format!("t={t}: {est:.4} vs {p:.4} ({z:.2} SE)"));
            }
            parts.push(format!("t={t} {z:.2} SE"));
        }
        Ok(parts.join(", "))
    };
    result("probability-law", run())
}

pub fn run_all(seed: u64, fault: Option<Fault>, base: &SimConfig) -> Vec<SuiteResult> {
    vec![
        cancellation(seed, fault, base),
        tamper(seed, fault, base),
        replay(seed, fault, base),
        threshold(seed),
        analytic(seed),
        probability(seed),
    ]
}
