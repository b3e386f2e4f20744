mod config;
mod faults;
mod verify;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fedsec_core::cost::sweep::{self, CheckResult};
use fedsec_core::cost::{binomial2, init_cost_exact, SizeProfile};
use fedsec_core::orchestrator::RoundOutcome;
use fedsec_core::{Simulation, TransportKind};
use serde::Serialize;

use config::RunConfig;
use faults::{Fault, FaultInjector};

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_ROUND_ABORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fedsec",
    version,
    about = "Secure federated aggregation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Bus,
    Socket,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    C,
    Rounds,
    Def,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured number of rounds and write transcript, ledger and trajectory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        transport: Option<TransportArg>,
        /// tamper-sig, tamper-mac, reuse-t or drop-update
        #[arg(long)]
        inject: Option<Fault>,
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Write one of the cost sweeps as CSV.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        #[command(flatten)]
        common: Common,
        /// Assert the structural properties of the sweep.
        #[arg(long)]
        check: bool,
        /// Meter the rounds sweep on the simulator instead of the closed form.
        #[arg(long)]
        simulate: bool,
    },
    /// Run the protocol property suites.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        inject: Option<Fault>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Abort(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.sim.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct RoundSummary {
    t: u64,
    session_id: u32,
    selected: usize,
    exchanges: u64,
    init_bytes: u64,
    agg_bytes: u64,
    outcome: String,
}

fn cmd_run(
    common: Common,
    transport: Option<TransportArg>,
    inject: Option<Fault>,
    rounds: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg = load(&common)?;
    if let Some(t) = transport {
        cfg.sim.transport = match t {
            TransportArg::Bus => TransportKind::Bus,
            TransportArg::Socket => TransportKind::Socket,
        };
    }
    if let Some(r) = rounds {
        cfg.sim.rounds = r;
    }
    cfg.sim.validate().map_err(|e| Failure::Config(e.into()))?;
    let dir = out_dir(&cfg)?;
    let mut sim = Simulation::new(cfg.sim.clone()).context("cannot start simulation")?;
    if let Some(f) = inject.filter(|f| *f != Fault::ReuseT) {
        sim.set_interceptor(Box::new(FaultInjector::new(f)));
    }
    let mut abort = None;
    for i in 0..cfg.sim.rounds {
        let r = if inject == Some(Fault::ReuseT) && i == 1 {
            let t = sim.records()[0].t;
            sim.run_round_at(t)
        } else {
            sim.run_round()
        }
        .context("transport failure")?;
        log::info!(
            "round t={} {} ({} selected, {} exchanges)",
            r.t,
            r.outcome,
            r.selection.len(),
            r.exchanges
        );
        if let RoundOutcome::Aborted(reason) = r.outcome {
            abort = Some(format!("round t={} aborted: {reason}", r.t));
            break;
        }
    }
    sim.write_artifacts(&dir)
        .context("cannot write artifacts")?;
    let summary: Vec<RoundSummary> = sim
        .records()
        .iter()
        .map(|r| RoundSummary {
            t: r.t,
            session_id: r.session_id,
            selected: r.selection.len(),
            exchanges: r.exchanges,
            init_bytes: r.init_bytes,
            agg_bytes: r.agg_bytes,
            outcome: r.outcome.to_string(),
        })
        .collect();
    let f = File::create(dir.join("rounds.json")).context("cannot write rounds.json")?;
    serde_json::to_writer_pretty(f, &summary).context("cannot write rounds.json")?;
    println!(
        "{} rounds, {} bytes metered, artifacts in {}",
        summary.len(),
        sim.ledger().total(),
        dir.display()
    );
    match abort {
        Some(msg) => Err(Failure::Abort(msg)),
        None => Ok(()),
    }
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let path = dir.join(name);
    sweep::write_rows(
        File::create(&path).with_context(|| format!("cannot create {}", path.display()))?,
        rows,
    )
    .with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

/// Largest simulator run the rounds sweep will attempt.
const SIM_MAX_NFS: u64 = 64;
const SIM_MAX_DIM: u64 = 4096;

fn cmd_sweep(kind: SweepKind, common: Common, check: bool, simulate: bool) -> Result<(), Failure> {
    let cfg = load(&common)?;
    let s = &cfg.sweep;
    if s.population < 2 || !(s.fraction > 0.0 && s.fraction <= 1.0) || s.c_steps == 0 {
        return Err(Failure::Config(anyhow::anyhow!(
            "[sweep] needs population >= 2, fraction in (0, 1], c_steps >= 1"
        )));
    }
    let dir = out_dir(&cfg)?;
    let p = SizeProfile::default();
    let checks: Vec<CheckResult> = match kind {
        SweepKind::C => {
            let rows = sweep::sweep_c(s, &p);
            write_csv(&dir, "sweep_c.csv", &rows)?;
            match sweep::crossover(s.population, s.dim, &p) {
                Some((c, k_s)) => println!(
                    "crossover C* = {c:.6} (K_s = {k_s}) at K = {}, d = {}",
                    s.population, s.dim
                ),
                None => println!(
                    "no crossover: init never exceeds aggregation at K = {}, d = {}",
                    s.population, s.dim
                ),
            }
            sweep::check_c(&rows)
        }
        SweepKind::Rounds if simulate => {
            if s.population > SIM_MAX_NFS || s.dim > SIM_MAX_DIM {
                return Err(Failure::Config(anyhow::anyhow!(
                    "K={} d={} is beyond simulation mode (K <= {SIM_MAX_NFS}, d <= {SIM_MAX_DIM}); analytic mode required",
                    s.population,
                    s.dim
                )));
            }
            let sim_cfg = fedsec_core::SimConfig {
                population: s.population as usize,
                fraction: s.fraction,
                dim: s.dim as usize,
                rounds: s.rounds,
                ..cfg.sim.clone()
            };
            sim_cfg.validate().map_err(|e| Failure::Config(e.into()))?;
            let mut sim = Simulation::new(sim_cfg).context("cannot start simulation")?;
            let recs = sim.run(s.rounds).context("transport failure")?;
            let mut rows = Vec::new();
            let (mut ci, mut cn, mut ca) = (0.0, 0.0, 0.0);
            for r in &recs {
                if let RoundOutcome::Aborted(reason) = r.outcome {
                    return Err(Failure::Abort(format!("round t={} aborted: {reason}", r.t)));
                }
                let k_s = r.selection.len() as u64;
                ci += r.init_bytes as f64;
                cn += init_cost_exact(k_s, binomial2(k_s), &p) as f64;
                ca += r.agg_bytes as f64;
                rows.push(sweep::SweepRoundsRow {
                    t: r.t,
                    cum_init_cached: ci,
                    cum_init_nocache: cn,
                    cum_agg: ca,
                });
            }
            write_csv(&dir, "sweep_rounds.csv", &rows)?;
            // realized selections are random, so only the linear and bound checks apply
            sweep::check_rounds(&rows)
                .into_iter()
                .filter(|c| !c.name.contains("non-increasing"))
                .collect()
        }
        SweepKind::Rounds => {
            let rows = sweep::sweep_rounds(s, &p).map_err(|e| Failure::Config(e.into()))?;
            write_csv(&dir, "sweep_rounds.csv", &rows)?;
            sweep::check_rounds(&rows)
        }
        SweepKind::Def => {
            let rows = sweep::sweep_def(s, &p).map_err(|e| Failure::Config(e.into()))?;
            write_csv(&dir, "sweep_def.csv", &rows)?;
            sweep::check_def(&rows)
        }
    };
    if check {
        let mut ok = true;
        for c in &checks {
            println!(
                "{:<4} {} {}",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.detail
            );
            ok &= c.pass;
        }
        if !ok {
            return Err(Failure::Other(anyhow::anyhow!("sweep checks failed")));
        }
    }
    Ok(())
}

fn cmd_verify(common: Common, inject: Option<Fault>) -> Result<(), Failure> {
    let cfg = load(&common)?;
    cfg.sim.validate().map_err(|e| Failure::Config(e.into()))?;
    let results = verify::run_all(cfg.sim.seed, inject, &cfg.sim);
    println!("{:<20} {:<6} detail", "suite", "result");
    for r in &results {
        println!(
            "{:<20} {:<6} {}",
            r.suite,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    if common.out.is_some() || cfg.out.is_some() {
        let dir = out_dir(&cfg)?;
        let f = File::create(dir.join("verify.json")).context("cannot write verify.json")?;
        serde_json::to_writer_pretty(f, &results).context("cannot write verify.json")?;
    }
    if results.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::Other(anyhow::anyhow!(
            "{} suites failed",
            results.iter().filter(|r| !r.pass).count()
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run {
            common,
            transport,
            inject,
            rounds,
        } => cmd_run(common, transport, inject, rounds),
        Command::Sweep {
            kind,
            common,
            check,
            simulate,
        } => cmd_sweep(kind, common, check, simulate),
        Command::Verify { common, inject } => cmd_verify(common, inject),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("invalid config: {e:#}");
            ExitCode::from(EXIT_INVALID_CONFIG)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_ROUND_ABORT)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
