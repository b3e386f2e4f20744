//! Analytic parameter sweeps and their structural checks.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::analytic::{
    analytic_agg_cost, binomial2, def_ratio, expected_def, expected_init_cost, init_cost_exact,
    ComparisonModel, CostError, SizeProfile,
};
use crate::orchestrator::selection_size;

/// ResNet-152 parameter bytes; divided by the float width for a weight count.
pub const RESNET152_BYTES: u64 = 241_376_928;
pub const SMALL_OPERATOR_NFS: u64 = 4237;
pub const LARGE_OPERATOR_NFS: u64 = 67_067;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub population: u64,
    pub dim: u64,
    pub fraction: f64,
    pub rounds: u64,
    /// grid for the C sweep
    pub c_steps: u64,
    pub def_populations: Vec<u64>,
    pub def_points: usize,
    pub def_min_dim: u64,
    pub comparison: Option<ComparisonModel>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            population: 100_000,
            dim: 1000,
            fraction: 0.1,
            rounds: 50,
            c_steps: 100,
            def_populations: vec![SMALL_OPERATOR_NFS, LARGE_OPERATOR_NFS],
            def_points: 25,
            def_min_dim: 1000,
            comparison: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCRow {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K_s")]
    pub k_s: u64,
    pub init_bytes: u64,
    pub agg_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRoundsRow {
    pub t: u64,
    pub cum_init_cached: f64,
    pub cum_init_nocache: f64,
    pub cum_agg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepDefRow {
    pub d: u64,
    #[serde(rename = "K")]
    pub k: u64,
    pub def_t1: f64,
    pub def_converged: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub def_comparison: Option<f64>,
}

/// First-round init cost (nothing cached) and one round of aggregation, over C.
pub fn sweep_c(cfg: &SweepConfig, p: &SizeProfile) -> Vec<SweepCRow> {
    (1..=cfg.c_steps)
        .map(|i| {
            let c = i as f64 / cfg.c_steps as f64;
            let k_s = selection_size(c, cfg.population as usize) as u64;
            SweepCRow {
                c,
                k_s,
                init_bytes: init_cost_exact(k_s, binomial2(k_s), p),
                agg_bytes: analytic_agg_cost(cfg.dim, cfg.population, k_s, p),
            }
        })
        .collect()
}

/// Smallest selection fraction at which first-round init exceeds one round
/// of aggregation, found by bisection over `K_s`. Returns `(C*, K_s*)`.
pub fn crossover(k: u64, d: u64, p: &SizeProfile) -> Option<(f64, u64)> {
    let exceeds =
        |k_s: u64| init_cost_exact(k_s, binomial2(k_s), p) > analytic_agg_cost(d, k, k_s, p);
    if k < 2 || !exceeds(k) {
        return None;
    }
    let (mut lo, mut hi) = (1u64, k);
    if exceeds(lo) {
        return Some((lo as f64 / k as f64, lo));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if exceeds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((hi as f64 / k as f64, hi))
}

/// Expected cumulative costs over rounds `1..=T`.
pub fn sweep_rounds(cfg: &SweepConfig, p: &SizeProfile) -> Result<Vec<SweepRoundsRow>, CostError> {
    let k_s = selection_size(cfg.fraction, cfg.population as usize) as u64;
    let nocache = init_cost_exact(k_s, binomial2(k_s), p) as f64;
    let agg = analytic_agg_cost(cfg.dim, cfg.population, k_s, p) as f64;
    let mut rows = Vec::with_capacity(cfg.rounds as usize);
    let mut cached = 0.0;
    for t in 1..=cfg.rounds {
        cached += expected_init_cost(cfg.population, k_s, t - 1, p)?;
        rows.push(SweepRoundsRow {
            t,
            cum_init_cached: cached,
            cum_init_nocache: nocache * t as f64,
            cum_agg: agg * t as f64,
        });
    }
    Ok(rows)
}

/// Log-spaced model sizes from `lo` to `hi` inclusive, deduplicated.
pub fn log_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    if points < 2 || lo >= hi {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as u64)
        .collect();
    *out.last_mut().expect("points >= 2") = hi;
    out.dedup();
    out
}

/// DEF after one round and in the long-run limit, over model size.
pub fn sweep_def(cfg: &SweepConfig, p: &SizeProfile) -> Result<Vec<SweepDefRow>, CostError> {
    let max_d = RESNET152_BYTES / p.float;
    let grid = log_grid(cfg.def_min_dim, max_d, cfg.def_points);
    let mut rows = Vec::new();
    for &k in &cfg.def_populations {
        let k_s = selection_size(cfg.fraction, k as usize) as u64;
        for &d in &grid {
            let agg = analytic_agg_cost(d, k, k_s, p) as f64;
            rows.push(SweepDefRow {
                d,
                k,
                def_t1: expected_def(k, k_s, d, Some(1), p)?,
                def_converged: expected_def(k, k_s, d, None, p)?,
                def_comparison: cfg
                    .comparison
                    .as_ref()
                    .map(|m| def_ratio(m.round_bytes(k_s, d), agg)),
            });
        }
    }
    Ok(rows)
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> CheckResult {
    CheckResult { name, pass, detail }
}

pub fn check_c(rows: &[SweepCRow]) -> Vec<CheckResult> {
    let mono = rows
        .windows(2)
        .all(|w| w[1].init_bytes >= w[0].init_bytes && w[1].agg_bytes >= w[0].agg_bytes);
    vec![check(
        "sweep_c monotone in C",
        mono,
        format!("{} rows", rows.len()),
    )]
}

pub fn check_rounds(rows: &[SweepRoundsRow]) -> Vec<CheckResult> {
    let inc = |f: fn(&SweepRoundsRow) -> f64| -> Vec<f64> {
        let mut prev = 0.0;
        rows.iter()
            .map(|r| {
                let d = f(r) - prev;
                prev = f(r);
                d
            })
            .collect()
    };
    let cached = inc(|r| r.cum_init_cached);
    let nocache = inc(|r| r.cum_init_nocache);
    let linear = nocache.windows(2).all(|w| w[0] == w[1]);
    let concave = cached.windows(2).all(|w| w[1] <= w[0]);
    let below = rows.iter().all(|r| r.cum_init_cached <= r.cum_init_nocache);
    vec![
        check(
            "without-cache init exactly linear",
            linear,
            format!("increment {:.0}", nocache.first().copied().unwrap_or(0.0)),
        ),
        check(
            "with-cache init increments non-increasing",
            concave,
            format!(
                "first {:.0} last {:.0}",
                cached.first().copied().unwrap_or(0.0),
                cached.last().copied().unwrap_or(0.0)
            ),
        ),
        check("cache never costs more", below, String::new()),
    ]
}

pub fn check_def(rows: &[SweepDefRow]) -> Vec<CheckResult> {
    let bounded = rows
        .iter()
        .all(|r| r.def_converged >= 1.0 && r.def_t1 >= r.def_converged);
    let mut by_k: Vec<u64> = rows.iter().map(|r| r.k).collect();
    by_k.dedup();
    let falling = by_k.iter().all(|&k| {
        let series: Vec<&SweepDefRow> = rows.iter().filter(|r| r.k == k).collect();
        series.windows(2).all(|w| w[1].def_t1 <= w[0].def_t1)
    });
    vec![
        check(
            "1 <= DEF(converged) <= DEF(t=1)",
            bounded,
            format!("{} rows", rows.len()),
        ),
        check(
            "DEF falls with model size",
            falling,
            format!("populations {by_k:?}"),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1000, RESNET152_BYTES / 4, 10);
        assert_eq!(g[0], 1000);
        assert_eq!(*g.last().unwrap(), 60_344_232);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn default_sweeps_pass_checks() {
        let cfg = SweepConfig {
            c_steps: 20,
            rounds: 30,
            def_points: 8,
            ..Default::default()
        };
        let p = SizeProfile::default();
        let c = sweep_c(&cfg, &p);
        assert_eq!(c.len(), 20);
        assert_eq!(c[0].k_s, 5000);
        assert!(check_c(&c).iter().all(|r| r.pass));
        let r = sweep_rounds(&cfg, &p).unwrap();
        assert!(
            check_rounds(&r).iter().all(|r| r.pass),
            "{:?}",
            check_rounds(&r)
        );
        let d = sweep_def(&cfg, &p).unwrap();
        assert_eq!(d.len(), 16);
        assert!(check_def(&d).iter().all(|r| r.pass));
    }

    #[test]
    fn crossover_is_the_first_exceeding_size() {
        let p = SizeProfile::default();
        let (c, ks) = crossover(100_000, 1000, &p).expect("crossover exists");
        assert!(init_cost_exact(ks, binomial2(ks), &p) > analytic_agg_cost(1000, 100_000, ks, &p));
        assert!(
            init_cost_exact(ks - 1, binomial2(ks - 1), &p)
                <= analytic_agg_cost(1000, 100_000, ks - 1, &p)
        );
        assert!(c > 0.0 && c <= 1.0);
    }

    #[test]
    fn csv_headers() {
        let p = SizeProfile::default();
        let cfg = SweepConfig {
            c_steps: 2,
            rounds: 2,
            def_points: 2,
            def_populations: vec![10],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_rows(&mut buf, &sweep_c(&cfg, &p)).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("C,K_s,init_bytes,agg_bytes\n"));
        let mut buf = Vec::new();
        write_rows(&mut buf, &sweep_rounds(&cfg, &p).unwrap()).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,cum_init_cached,cum_init_nocache,cum_agg\n"));
        let mut buf = Vec::new();
        write_rows(&mut buf, &sweep_def(&cfg, &p).unwrap()).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("d,K,def_t1,def_converged\n"));
    }
}
