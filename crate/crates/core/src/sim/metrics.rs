use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::invariants::Violation;
use crate::node::PartitionId;
use crate::ring::NodeId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentStatus {
    pub size: usize,
    pub converged: bool,
    /// Set when every member agrees on one partition id.
    pub partition: Option<PartitionId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub gossip_sent: u64,
    pub record_sent: u64,
    pub baseline_sent: u64,
    /// Most gossip messages any single node received this round.
    pub max_received: u64,
    pub active_nodes: usize,
    /// Keyed by each component's smallest member.
    pub components: BTreeMap<NodeId, ComponentStatus>,
    pub violations: Vec<Violation>,
    pub merges: usize,
    pub topology_changed: bool,
}

impl RoundMetrics {
    pub const CSV_HEADER: &'static str =
        "round,gossip_sent,record_sent,baseline_sent,components,converged,violations";

    pub fn converged_count(&self) -> usize {
        self.components.values().filter(|c| c.converged).count()
    }

    pub fn all_converged(&self) -> bool {
        self.components.values().all(|c| c.converged)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.round,
            self.gossip_sent,
            self.record_sent,
            self.baseline_sent,
            self.components.len(),
            self.converged_count(),
            self.violations.len()
        )
    }
}

pub fn write_csv<W: Write>(mut w: W, series: &[RoundMetrics]) -> io::Result<()> {
    writeln!(w, "{}", RoundMetrics::CSV_HEADER)?;
    for m in series {
        writeln!(w, "{}", m.csv_row())?;
    }
    Ok(())
}

/// Round at which each final component converged for good: the first round
/// at or after the last topology change from which the component stays
/// converged until the end. `None` if it is not converged at the end.
pub fn convergence_round(series: &[RoundMetrics]) -> BTreeMap<NodeId, Option<u64>> {
    let Some(last) = series.last() else {
        return BTreeMap::new();
    };
    let settle_from = series
        .iter()
        .rev()
        .find(|m| m.topology_changed)
        .map_or(series[0].round, |m| m.round);

    last.components
        .keys()
        .map(|&key| {
            let mut found = None;
            for m in series.iter().rev() {
                if m.round < settle_from {
                    break;
                }
                match m.components.get(&key) {
                    Some(c) if c.converged => found = Some(m.round),
                    _ => break,
                }
            }
            (key, found)
        })
        .collect()
}

/// Totals and outcomes of a finished run, written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds_run: u64,
    pub all_converged: bool,
    pub convergence: BTreeMap<NodeId, Option<u64>>,
    /// Partition id → number of live nodes carrying it at the end.
    pub final_partitions: BTreeMap<PartitionId, usize>,
    pub gossip_sent: u64,
    pub record_sent: u64,
    pub baseline_sent: u64,
    pub max_gossip_sent_per_round: u64,
    pub max_received_per_round: u64,
    pub merge_decisions: usize,
    pub violations: usize,
}
