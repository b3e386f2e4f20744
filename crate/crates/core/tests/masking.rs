use fedsec_core::fl::plaintext_fedavg;
use fedsec_core::masking::{
    decode_aggregate, derive_pair_mask, encode, mask_update, sign_for, sum_masked, MaskedUpdate,
    ModelVector, ModulusConfig, PairId, SignedMask,
};
use fedsec_core::Hostname;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hosts(n: usize) -> Vec<Hostname> {
    (0..n as u32)
        .map(|i| Hostname::for_index(i, "myran.example.com").unwrap())
        .collect()
}

/// Masked updates for `models`, with pair secrets drawn from `seed`.
fn masked(models: &[ModelVector], t: u64, seed: u64, cfg: &ModulusConfig) -> Vec<MaskedUpdate> {
    let hs = hosts(models.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = models.len();
    let mut secrets = vec![vec![[0u8; 32]; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s: [u8; 32] = rng.gen();
            secrets[i][j] = s;
            secrets[j][i] = s;
        }
    }
    (0..n)
        .map(|i| {
            let d = models[i].weights.len();
            let masks: Vec<SignedMask> = (0..n)
                .filter(|&j| j != i)
                .map(|j| SignedMask {
                    mask: derive_pair_mask(&secrets[i][j], PairId::new(hs[i], hs[j]), t, d, cfg),
                    sign: sign_for(i, j),
                })
                .collect();
            let peers: Vec<Hostname> = (0..n).filter(|&j| j != i).map(|j| hs[j]).collect();
            mask_update(hs[i], &models[i], &masks, &peers, t, cfg).unwrap()
        })
        .collect()
}

fn models_strategy() -> impl Strategy<Value = Vec<ModelVector>> {
    (2usize..=16, 1usize..=64).prop_flat_map(|(k, d)| {
        proptest::collection::vec(
            (
                proptest::collection::vec(-256.0f64..=256.0, d),
                1u64..=1 << 16,
            )
                .prop_map(|(weights, n)| ModelVector { weights, n }),
            k,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn masks_cancel_and_decode_to_fedavg(models in models_strategy(), t: u64, seed: u64) {
        let cfg = ModulusConfig::default();
        let ups = masked(&models, t, seed, &cfg);
        let hs = hosts(models.len());
        let agg = sum_masked(&ups, &hs, &cfg).unwrap();

        // the sum of masked words equals the sum of unmasked encodings mod R
        for (c, &word) in agg.vector.iter().enumerate() {
            let plain = models.iter().fold(0u64, |acc, m| cfg.add(acc, cfg.mul(m.n, encode(m.weights[c], &cfg).unwrap())));
            prop_assert_eq!(word, plain);
        }
        prop_assert_eq!(agg.total_count, models.iter().map(|m| m.n).sum::<u64>());

        let got = decode_aggregate(&agg, &cfg).unwrap();
        let want = plaintext_fedavg(&models).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 2f64.powi(-(cfg.frac_bits as i32) - 1) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn masked_words_reveal_nothing_obvious(models in models_strategy(), seed: u64) {
        // a masked update differs from the plain encoding whenever the NF has peers
        let cfg = ModulusConfig::default();
        let ups = masked(&models, 1, seed, &cfg);
        for (u, m) in ups.iter().zip(&models) {
            let plain: Vec<u64> = m.weights.iter().map(|&w| cfg.mul(m.n, encode(w, &cfg).unwrap())).collect();
            prop_assert_ne!(&u.vector, &plain);
        }
    }
}

#[test]
fn removing_one_update_breaks_the_sum() {
    let cfg = ModulusConfig::default();
    let tol = 2f64.powi(-23);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let k = rng.gen_range(3..=10);
        let d = rng.gen_range(1..=32);
        let models: Vec<ModelVector> = (0..k)
            .map(|_| ModelVector {
                weights: (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect(),
                n: rng.gen_range(1..=1000),
            })
            .collect();
        let ups = masked(&models, trial, rng.gen(), &cfg);
        let hs = hosts(k);
        let drop = rng.gen_range(0..k);
        let partial_ups: Vec<_> = ups
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != drop)
            .map(|(_, u)| u.clone())
            .collect();
        let partial_hosts: Vec<_> = hs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != drop)
            .map(|(_, h)| *h)
            .collect();
        let agg = sum_masked(&partial_ups, &partial_hosts, &cfg).unwrap();

        // every non-empty partial plaintext average; k <= 10 keeps this small
        let mut partials = Vec::new();
        for mask in 1u32..(1 << k) {
            let subset: Vec<_> = (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| models[i].clone())
                .collect();
            partials.push(plaintext_fedavg(&subset).unwrap());
        }
        match decode_aggregate(&agg, &cfg) {
            Err(_) => {}
            Ok(v) => {
                for (c, x) in v.iter().enumerate() {
                    assert!(
                        partials.iter().all(|p| (p[c] - x).abs() > tol),
                        "trial {trial}: component {c} matched a partial average"
                    );
                }
            }
        }
        // the NWDAF refuses a sum whose senders are not exactly S
        assert!(sum_masked(&partial_ups, &hs, &cfg).is_err());
    }
}
