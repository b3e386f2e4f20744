use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fedsec_core::masking::{
    derive_pair_mask, mask_update, sign_for, sum_masked, PairId, SignedMask,
};
use fedsec_core::{Hostname, ModelVector, ModulusConfig, SimConfig, Simulation};

const DOMAIN: &str = "myran.example.com";

fn hosts(n: u32) -> Vec<Hostname> {
    (0..n)
        .map(|i| Hostname::for_index(i, DOMAIN).unwrap())
        .collect()
}

fn mask_derivation(c: &mut Criterion) {
    let cfg = ModulusConfig::default();
    let h = hosts(2);
    let pair = PairId::new(h[0], h[1]);
    let mut g = c.benchmark_group("derive_pair_mask");
    for d in [1_000usize, 100_000] {
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, &d| {
            b.iter(|| derive_pair_mask(black_box(&[7u8; 32]), pair, 1, d, &cfg))
        });
    }
    g.finish();
}

fn secure_sum(c: &mut Criterion) {
    let cfg = ModulusConfig::default();
    let d = 10_000;
    let mut g = c.benchmark_group("sum_masked");
    for k in [4u32, 16] {
        let h = hosts(k);
        let updates: Vec<_> = h
            .iter()
            .enumerate()
            .map(|(i, &me)| {
                let peers: Vec<_> = h.iter().copied().filter(|p| *p != me).collect();
                let masks: Vec<_> = h
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, &p)| SignedMask {
                        mask: derive_pair_mask(
                            &[(i.min(j) * 31 + i.max(j)) as u8; 32],
                            PairId::new(me, p),
                            1,
                            d,
                            &cfg,
                        ),
                        sign: sign_for(i, j),
                    })
                    .collect();
                let mv = ModelVector {
                    weights: vec![0.25; d],
                    n: 10,
                };
                mask_update(me, &mv, &masks, &peers, 1, &cfg).unwrap()
            })
            .collect();
        g.bench_with_input(BenchmarkId::from_parameter(k), &updates, |b, u| {
            b.iter(|| sum_masked(black_box(u), &h, &cfg).unwrap())
        });
    }
    g.finish();
}

fn rounds(c: &mut Criterion) {
    let cfg = SimConfig {
        population: 8,
        fraction: 1.0,
        dim: 256,
        ..SimConfig::default()
    };
    let mut g = c.benchmark_group("round");
    g.sample_size(10);
    // the first round runs a SIGMA handshake for every pair
    g.bench_function("handshakes_k8", |b| {
        b.iter_with_setup(
            || Simulation::new(cfg.clone()).unwrap(),
            |mut sim| sim.run_round().unwrap(),
        )
    });
    g.bench_function("cached_k8", |b| {
        let mut sim = Simulation::new(cfg.clone()).unwrap();
        sim.run_round().unwrap();
        b.iter(|| sim.run_round().unwrap())
    });
    g.finish();
}

criterion_group!(benches, mask_derivation, secure_sum, rounds);
criterion_main!(benches);
