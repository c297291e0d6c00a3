//! Name records: storage, last-writer-wins reconciliation and greedy
//! finger routing within a partition.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::{responsible_node, NodeState};
use crate::ring::{clockwise_distance, hash_name, in_interval, NodeId, RingConfig};
use crate::view::PeerView;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordVersion {
    pub origin: NodeId,
    pub counter: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DnsRecord {
    pub name: String,
    pub ip: String,
    /// Rounds left before the record expires.
    pub ttl: u64,
    pub version: RecordVersion,
}

impl DnsRecord {
    /// Total order used by the merge: higher counter, then lower origin,
    /// then lower ttl (an older copy of the same write), then ip.
    fn precedence(&self) -> (u64, Reverse<NodeId>, Reverse<u64>, &str, &str) {
        (
            self.version.counter,
            Reverse(self.version.origin),
            Reverse(self.ttl),
            &self.ip,
            &self.name,
        )
    }

    /// The surviving record of two writes to the same name.
    pub fn merge(a: DnsRecord, b: DnsRecord) -> DnsRecord {
        match a.precedence().cmp(&b.precedence()) {
            Ordering::Less => b,
            _ => a,
        }
    }
}

pub type RecordSet = BTreeMap<String, DnsRecord>;

/// Folds `incoming` into `records`, keeping the LWW winner per name.
pub fn merge_records<'a>(
    records: &mut RecordSet,
    incoming: impl IntoIterator<Item = &'a DnsRecord>,
) {
    for r in incoming {
        match records.get_mut(&r.name) {
            Some(cur) => {
                if cur.precedence() < r.precedence() {
                    *cur = r.clone();
                }
            }
            None => {
                records.insert(r.name.clone(), r.clone());
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LookupOutcome {
    Found,
    NotFound,
    Unreachable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupResult {
    pub outcome: LookupOutcome,
    pub record: Option<DnsRecord>,
    pub hops: usize,
    pub path: Vec<NodeId>,
    /// The answering node is not the one that owns the key in the full
    /// network, i.e. the answer comes from a partition-local authority and
    /// may be stale.
    pub degraded: bool,
}

impl NodeState {
    /// Stores a new write for `name` at this node.
    ///
    /// The counter is one past both this node's own counter and any counter
    /// already held for the name, so a fresh write supersedes what the node
    /// has seen.
    pub fn publish(&mut self, name: &str, ip: &str, ttl: u64) -> DnsRecord {
        let held = self.dns_records.get(name).map_or(0, |r| r.version.counter);
        let counter = self.vv.get(self.id).max(held) + 1;
        self.vv.set(self.id, counter);
        let record = DnsRecord {
            name: name.to_owned(),
            ip: ip.to_owned(),
            ttl,
            version: RecordVersion {
                origin: self.id,
                counter,
            },
        };
        self.dns_records.insert(name.to_owned(), record.clone());
        record
    }

    pub fn anti_entropy_records<'a>(
        &mut self,
        peer_records: impl IntoIterator<Item = &'a DnsRecord>,
    ) {
        merge_records(&mut self.dns_records, peer_records);
    }

    /// Ends a round for the record store: every ttl drops by one and expired
    /// records are purged. Returns how many were purged.
    pub fn age_records(&mut self) -> usize {
        let before = self.dns_records.len();
        self.dns_records.retain(|_, r| {
            r.ttl = r.ttl.saturating_sub(1);
            r.ttl > 0
        });
        before - self.dns_records.len()
    }
}

/// Path of a greedy lookup and whether it reached a node that owns the key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub path: Vec<NodeId>,
    pub reached: bool,
}

impl Route {
    pub fn terminal(&self) -> NodeId {
        *self.path.last().expect("route path is never empty")
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

/// Greedy Chord routing toward the partition-local owner of `key`.
///
/// Each step stays within the origin's partition and only follows links the
/// oracle reports reachable.
pub fn route(
    origin: NodeId,
    key: NodeId,
    states: &BTreeMap<NodeId, NodeState>,
    view: &PeerView,
    cfg: &RingConfig,
) -> Route {
    let mut path = vec![origin];
    let Some(first) = states
        .get(&origin)
        .filter(|s| s.active && view.is_active(origin))
    else {
        return Route {
            path,
            reached: false,
        };
    };
    let partition = first.partition_id;
    let mut cur = origin;

    for _ in 0..=states.len() {
        let s = &states[&cur];
        let usable = |j: NodeId| j != cur && view.same_partition(cur, partition, j);

        if s.successor == cur {
            // a ring of one owns every key
            return Route {
                path,
                reached: true,
            };
        }
        if let Some(pred) = s.predecessor.filter(|&p| usable(p)) {
            if in_interval(key, pred, cur, cfg) {
                return Route {
                    path,
                    reached: true,
                };
            }
        }
        let Some(succ) = Some(s.successor).filter(|&x| usable(x)) else {
            return Route {
                path,
                reached: false,
            };
        };
        let next = if in_interval(key, cur, succ, cfg) {
            succ
        } else {
            s.finger_targets()
                .chain(std::iter::once(succ))
                .filter(|&f| usable(f) && in_interval(f, cur, key, cfg))
                .max_by_key(|&f| clockwise_distance(cur, f, cfg))
                .unwrap_or(succ)
        };
        path.push(next);
        cur = next;
    }
    Route {
        path,
        reached: false,
    }
}

pub fn lookup(
    origin: NodeId,
    name: &str,
    states: &BTreeMap<NodeId, NodeState>,
    view: &PeerView,
    cfg: &RingConfig,
) -> Result<LookupResult> {
    let key = hash_name(name, cfg)?;
    let r = route(origin, key, states, view, cfg);
    if !r.reached {
        return Ok(LookupResult {
            outcome: LookupOutcome::Unreachable,
            record: None,
            hops: r.hops(),
            path: r.path,
            degraded: false,
        });
    }
    let terminal = r.terminal();
    let record = states[&terminal].dns_records.get(name).cloned();
    Ok(LookupResult {
        outcome: if record.is_some() {
            LookupOutcome::Found
        } else {
            LookupOutcome::NotFound
        },
        record,
        hops: r.hops(),
        degraded: terminal != global_owner(key, states)?,
        path: r.path,
    })
}

/// Routes a write from `origin` to the partition-local owner of `name` and
/// stores it there. A route that dead-ends stores at the last node reached.
pub fn publish(
    origin: NodeId,
    name: &str,
    ip: &str,
    ttl: u64,
    states: &mut BTreeMap<NodeId, NodeState>,
    view: &PeerView,
    cfg: &RingConfig,
) -> Result<LookupResult> {
    let key = hash_name(name, cfg)?;
    if !states.get(&origin).is_some_and(|s| s.active) {
        return Err(Error::invalid(format!(
            "publish origin {origin} is not active"
        )));
    }
    let r = route(origin, key, states, view, cfg);
    let terminal = r.terminal();
    let degraded = terminal != global_owner(key, states)?;
    let record = states
        .get_mut(&terminal)
        .expect("route stays on known nodes")
        .publish(name, ip, ttl);
    Ok(LookupResult {
        outcome: LookupOutcome::Found,
        record: Some(record),
        hops: r.hops(),
        path: r.path,
        degraded,
    })
}

fn global_owner(key: NodeId, states: &BTreeMap<NodeId, NodeState>) -> Result<NodeId> {
    let live = states.values().filter(|s| s.active).map(|s| s.id).collect();
    responsible_node(key, &live)
}
