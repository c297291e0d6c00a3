//! JSON Lines event log.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::invariants::Violation;
use crate::dns::{LookupOutcome, RecordVersion};
use crate::gossip::{FingerSelection, GossipMessage};
use crate::node::PartitionId;
use crate::ring::{IdMode, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub round: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Gossip,
    Records,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEvent {
    Network {
        n: usize,
        m: u32,
        seed: u64,
        id_mode: IdMode,
        finger_selection: FingerSelection,
        ids: Vec<NodeId>,
    },
    Split {
        fragments: Vec<Vec<NodeId>>,
        partition_ids: Vec<PartitionId>,
    },
    Heal {
        partitions: Vec<u64>,
        merged: u64,
    },
    Kill {
        node: NodeId,
    },
    Revive {
        node: NodeId,
    },
    Publish {
        node: NodeId,
        name: String,
        ip: String,
        ttl: u64,
        stored_at: NodeId,
        version: RecordVersion,
        hops: usize,
        path: Vec<NodeId>,
    },
    Lookup {
        origin: NodeId,
        name: String,
        outcome: LookupOutcome,
        hops: usize,
        path: Vec<NodeId>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        ip: Option<String>,
        degraded: bool,
    },
    Send {
        kind: MessageKind,
        from: NodeId,
        to: NodeId,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        msg: Option<GossipMessage>,
    },
    Merge {
        node: NodeId,
        from: PartitionId,
        to: PartitionId,
    },
    Converged {
        component: NodeId,
        partition: PartitionId,
        size: usize,
    },
    Violation(Violation),
    Round {
        gossip_sent: u64,
        record_sent: u64,
        baseline_sent: u64,
        components: usize,
        converged: usize,
        merges: usize,
        violations: usize,
    },
}

impl LogEntry {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }
}

pub fn write_jsonl<W: Write>(mut w: W, entries: &[LogEntry]) -> io::Result<()> {
    for e in entries {
        writeln!(w, "{}", e.to_line())?;
    }
    Ok(())
}

pub fn to_jsonl(entries: &[LogEntry]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, entries).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}
