//! Byte accounting for the secure aggregation protocol: a per-frame ledger
//! filled by the orchestrator, closed-form cost models and parameter sweeps.

mod analytic;
mod ledger;
pub mod sweep;

pub use analytic::{
    analytic_agg_cost, analytic_init_cost, binomial2, def_ratio, expected_cached_fraction,
    expected_def, expected_init_cost, init_cost_exact, key_setup_bytes, loglog_slope,
    monte_carlo_exchange_frequency, p_key_exchange, pair_overlap_probability, ComparisonModel,
    CostError, SizeProfile,
};
pub use ledger::{CostLedger, Direction, LedgerRow, Phase};
