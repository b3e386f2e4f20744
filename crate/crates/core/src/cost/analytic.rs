use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("exchange probability needs K >= 2 (got K={0})")]
    PopulationTooSmall(u64),
    #[error("K_s={k_s} must lie in [1, K={k}]")]
    SelectionOutOfRange { k_s: u64, k: u64 },
    #[error("regression needs at least two positive points")]
    TooFewPoints,
}

/// Wire sizes in bytes. The defaults match the codec exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeProfile {
    pub hostname: u64,
    pub dh_pub: u64,
    pub sig: u64,
    pub mac: u64,
    pub word: u64,
    pub float: u64,
    pub header: u64,
    pub count: u64,
    pub container_overhead: u64,
}

impl Default for SizeProfile {
    fn default() -> Self {
        Self {
            hostname: 30,
            dh_pub: 32,
            sig: 64,
            mac: 16,
            word: 8,
            float: 4,
            header: 17,
            count: 4,
            container_overhead: 30 + 30 + 4,
        }
    }
}

impl SizeProfile {
    pub fn msg1(&self) -> u64 {
        self.dh_pub
    }

    pub fn msg2(&self) -> u64 {
        self.dh_pub + self.sig + self.mac
    }

    pub fn msg3(&self) -> u64 {
        self.sig + self.mac
    }

    /// An empty ContainerBatch frame.
    pub fn batch_frame(&self) -> u64 {
        self.header + self.count
    }

    /// Bytes one SIGMA exchange adds: three containers, each metered on the
    /// way up to the NWDAF and again on the way down.
    pub fn exchange_bytes(&self) -> u64 {
        2 * (3 * self.container_overhead + self.msg1() + self.msg2() + self.msg3())
    }
}

pub fn binomial2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Key Setup Requests: each of the `K_s` members receives the full list.
pub fn key_setup_bytes(k_s: u64, p: &SizeProfile) -> u64 {
    k_s * (p.header + p.count + k_s * p.hostname)
}

/// Exact init-phase bytes for a round in which `exchanges` SIGMA runs happen.
///
/// Every member answers the Key Setup Request with one batch. When that
/// first leg carries no containers the phase ends there; otherwise three
/// routed legs follow, each answered by every member, for seven batch frames
/// per member in total.
pub fn init_cost_exact(k_s: u64, exchanges: u64, p: &SizeProfile) -> u64 {
    let batches = if exchanges == 0 { 1 } else { 7 };
    key_setup_bytes(k_s, p) + batches * k_s * p.batch_frame() + exchanges * p.exchange_bytes()
}

/// Init-phase bytes when a fraction of the `C(K_s, 2)` pairs is already cached.
pub fn analytic_init_cost(k_s: u64, p: &SizeProfile, cached_pair_fraction: f64) -> f64 {
    let pairs = binomial2(k_s) as f64 * (1.0 - cached_pair_fraction.clamp(0.0, 1.0));
    if pairs == 0.0 {
        return init_cost_exact(k_s, 0, p) as f64;
    }
    (key_setup_bytes(k_s, p) + 7 * k_s * p.batch_frame()) as f64 + pairs * p.exchange_bytes() as f64
}

/// Aggregation bytes per round: requests and masked responses from the `K_s`
/// members plus a global update to every one of the `K` subscribers.
pub fn analytic_agg_cost(d: u64, k: u64, k_s: u64, p: &SizeProfile) -> u64 {
    let request = p.header;
    let response = p.header + p.count + d * p.word + p.word;
    let update = p.header + p.count + d * p.float;
    k_s * (request + response) + k * update
}

/// `(init + agg) / agg`; equals 1 without security traffic.
pub fn def_ratio(init_bytes: f64, agg_bytes: f64) -> f64 {
    (init_bytes + agg_bytes) / agg_bytes
}

/// Probability that a fixed pair of NFs was never selected together in `t`
/// rounds of uniform selection of `K_s` out of `K`.
pub fn p_key_exchange(k: u64, k_s: u64, t: u64) -> Result<f64, CostError> {
    if k < 2 {
        return Err(CostError::PopulationTooSmall(k));
    }
    if k_s == 0 || k_s > k {
        return Err(CostError::SelectionOutOfRange { k_s, k });
    }
    let base = 1.0 - pair_overlap_probability(k, k_s);
    Ok(base.powf(t as f64))
}

/// Probability that a fixed pair is co-selected in one round.
pub fn pair_overlap_probability(k: u64, k_s: u64) -> f64 {
    (k_s as f64 / k as f64) * ((k_s as f64 - 1.0) / (k as f64 - 1.0))
}

pub fn expected_cached_fraction(k: u64, k_s: u64, t: u64) -> Result<f64, CostError> {
    Ok(1.0 - p_key_exchange(k, k_s, t)?)
}

/// Expected init bytes in round index `t` (0 for the first round).
pub fn expected_init_cost(k: u64, k_s: u64, t: u64, p: &SizeProfile) -> Result<f64, CostError> {
    Ok(analytic_init_cost(
        k_s,
        p,
        expected_cached_fraction(k, k_s, t)?,
    ))
}

/// Cumulative expected DEF over the first `horizon` rounds (`None` = limit).
pub fn expected_def(
    k: u64,
    k_s: u64,
    d: u64,
    horizon: Option<u64>,
    p: &SizeProfile,
) -> Result<f64, CostError> {
    let agg = analytic_agg_cost(d, k, k_s, p) as f64;
    match horizon {
        Some(h) => {
            let init: f64 = (0..h)
                .map(|t| expected_init_cost(k, k_s, t, p))
                .sum::<Result<f64, _>>()?;
            Ok(def_ratio(init, agg * h as f64))
        }
        None => {
            p_key_exchange(k, k_s, 0)?;
            // the geometric exchange term sums to a constant, so only the
            // steady per-round framing survives the average
            Ok(def_ratio(init_cost_exact(k_s, 0, p) as f64, agg))
        }
    }
}

/// Monte-Carlo estimate of `p_key_exchange`: the fraction of trials in which
/// NFs 0 and 1 are never selected together over `t` rounds.
pub fn monte_carlo_exchange_frequency(
    k: u64,
    k_s: u64,
    t: u64,
    trials: u64,
    seed: u64,
) -> Result<f64, CostError> {
    p_key_exchange(k, k_s, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut never = 0u64;
    for _ in 0..trials {
        let met = (0..t).any(|_| {
            let s = sample(&mut rng, k as usize, k_s as usize);
            let mut a = false;
            let mut b = false;
            for i in s.iter() {
                a |= i == 0;
                b |= i == 1;
            }
            a && b
        });
        if !met {
            never += 1;
        }
    }
    Ok(never as f64 / trials as f64)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64, CostError> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return Err(CostError::TooFewPoints);
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CostError::TooFewPoints);
    }
    Ok(sxy / sxx)
}

/// User-supplied per-round cost of another secure aggregation scheme:
/// `fixed + per_client * K_s + per_client_pair * K_s^2 + per_client_weight * K_s * d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonModel {
    pub name: String,
    #[serde(default)]
    pub fixed: f64,
    #[serde(default)]
    pub per_client: f64,
    #[serde(default)]
    pub per_client_pair: f64,
    #[serde(default)]
    pub per_client_weight: f64,
}

impl ComparisonModel {
    pub fn round_bytes(&self, k_s: u64, d: u64) -> f64 {
        let ks = k_s as f64;
        self.fixed
            + self.per_client * ks
            + self.per_client_pair * ks * ks
            + self.per_client_weight * ks * d as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_examples() {
        for (k, ks) in [(2, 1), (10, 3), (100, 10), (100_000, 40_000)] {
            assert_eq!(p_key_exchange(k, ks, 0).unwrap(), 1.0);
        }
        assert_eq!(p_key_exchange(10, 10, 1).unwrap(), 0.0);
        let p = p_key_exchange(100, 10, 1).unwrap();
        assert!((p - (1.0 - 0.1 * 9.0 / 99.0)).abs() < 1e-15);
        assert!((p - 0.990909).abs() < 1e-6);
        assert_eq!(
            p_key_exchange(1, 1, 3),
            Err(CostError::PopulationTooSmall(1))
        );
        assert!(p_key_exchange(10, 11, 1).is_err());
    }

    #[test]
    fn monte_carlo_oracle_for_first_round() {
        let trials = 100_000;
        let est = monte_carlo_exchange_frequency(100, 10, 1, trials, 5).unwrap();
        let p = p_key_exchange(100, 10, 1).unwrap();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((est - p).abs() < 3.0 * se, "est {est} p {p} se {se}");
    }

    #[test]
    fn cached_fraction_is_monotone() {
        assert_eq!(expected_cached_fraction(50, 5, 0).unwrap(), 0.0);
        assert_eq!(expected_cached_fraction(8, 8, 1).unwrap(), 1.0);
        let mut prev = -1.0;
        for t in 0..200 {
            let f = expected_cached_fraction(100_000, 1000, t).unwrap();
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn init_cost_closed_form() {
        let p = SizeProfile::default();
        assert_eq!(p.exchange_bytes(), 2 * (3 * 64 + 32 + 112 + 80));
        // K_s = 4, nothing cached: 6 exchanges, 36 container transmissions
        let exact = init_cost_exact(4, 6, &p);
        assert_eq!(exact, 4 * (17 + 4 + 120) + 7 * 4 * 21 + 6 * 832);
        assert_eq!(analytic_init_cost(4, &p, 0.0), exact as f64);
        assert_eq!(analytic_init_cost(4, &p, 1.0), (4 * 141 + 4 * 21) as f64);
        assert_eq!(init_cost_exact(1, 0, &p), 17 + 4 + 30 + 21);
        assert_eq!(init_cost_exact(0, 0, &p), 0);
    }

    #[test]
    fn agg_cost_linearity() {
        let p = SizeProfile::default();
        assert_eq!(analytic_agg_cost(0, 4, 4, &p), 4 * (17 + 29) + 4 * 21);
        let base = analytic_agg_cost(16, 4, 4, &p);
        let update = 17 + 4 + 16 * 4;
        assert_eq!(analytic_agg_cost(16, 8, 4, &p) - base, 4 * update);
    }

    #[test]
    fn def_examples() {
        assert_eq!(def_ratio(0.0, 123.0), 1.0);
        let p = SizeProfile::default();
        let d1 = expected_def(100, 20, 64, Some(1), &p).unwrap();
        let d25 = expected_def(100, 20, 64, Some(25), &p).unwrap();
        let lim = expected_def(100, 20, 64, None, &p).unwrap();
        assert!(d25 < d1 && lim < d25 && lim >= 1.0);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powi(2)))
            .collect();
        assert!((loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_err());
    }

    #[test]
    fn comparison_model_is_linear_in_coefficients() {
        let m = ComparisonModel {
            name: "x".into(),
            fixed: 1.0,
            per_client: 2.0,
            per_client_pair: 3.0,
            per_client_weight: 4.0,
        };
        assert_eq!(m.round_bytes(2, 10), 1.0 + 4.0 + 12.0 + 80.0);
    }
}
