use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::orchestrator::wire::MsgType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Registration,
    Init,
    Aggregation,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Registration => "registration",
            Phase::Init => "init",
            Phase::Aggregation => "aggregation",
        })
    }
}

/// Uplink is NF to NWDAF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        })
    }
}

/// One metered frame. `round` is empty for registration traffic.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LedgerRow {
    pub round: Option<u64>,
    pub phase: Phase,
    pub direction: Direction,
    pub msg_type: MsgType,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default)]
pub struct CostLedger {
    rows: Vec<LedgerRow>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.bytes).sum()
    }

    pub fn total_phase(&self, phase: Phase) -> u64 {
        self.sum(|r| r.phase == phase)
    }

    pub fn round_phase(&self, round: u64, phase: Phase) -> u64 {
        self.sum(|r| r.round == Some(round) && r.phase == phase)
    }

    pub fn sum(&self, pred: impl Fn(&LedgerRow) -> bool) -> u64 {
        self.rows.iter().filter(|r| pred(r)).map(|r| r.bytes).sum()
    }

    pub fn rounds(&self) -> Vec<u64> {
        self.rows
            .iter()
            .filter_map(|r| r.round)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Cumulative overhead ratio `(init + agg) / agg` over the given rounds.
    pub fn def_over(&self, rounds: &[u64]) -> Option<f64> {
        let set: BTreeSet<_> = rounds.iter().copied().collect();
        let init =
            self.sum(|r| r.phase == Phase::Init && r.round.is_some_and(|t| set.contains(&t)));
        let agg = self
            .sum(|r| r.phase == Phase::Aggregation && r.round.is_some_and(|t| set.contains(&t)));
        def_ratio_checked(init, agg)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "phase", "direction", "msg_type", "bytes"])?;
        for r in &self.rows {
            out.write_record([
                r.round.map(|t| t.to_string()).unwrap_or_default(),
                r.phase.to_string(),
                r.direction.to_string(),
                r.msg_type.to_string(),
                r.bytes.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn def_ratio_checked(init: u64, agg: u64) -> Option<f64> {
    (agg > 0).then(|| (init + agg) as f64 / agg as f64)
}

impl Serialize for MsgType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}
