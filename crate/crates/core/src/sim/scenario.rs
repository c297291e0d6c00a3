//! Declarative scenario files.

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use super::topology::{HealTarget, Topology};
use crate::error::{Error, Result};
use crate::gossip::FingerSelection;
use crate::ring::{assign_ids, hash_name, IdMode, NodeId, RingConfig, MAX_BITS};

pub const SCHEMA_VERSION: u32 = 1;

/// Order in which a round's messages reach their receivers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    /// In the order they were sent.
    #[default]
    Ordered,
    /// Seeded shuffle of the whole round.
    Shuffled,
    /// Every message is duplicated with probability 1/2, then shuffled.
    ShuffledDuplicated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub fanout: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GossipMode {
    #[default]
    Structured,
    /// Unstructured epidemic: `fanout` random reachable peers per round.
    Baseline { fanout: usize },
}

/// Everything needed to build a network, independent of any event schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n: usize,
    pub cfg: RingConfig,
    pub id_mode: IdMode,
    pub finger_selection: FingerSelection,
    pub delivery: Delivery,
    pub gossip: GossipMode,
    pub trace_messages: bool,
}

impl NetworkSpec {
    /// Dense ids on the smallest ring that holds them.
    pub fn dense(n: usize, seed: u64) -> Self {
        NetworkSpec {
            n,
            cfg: RingConfig {
                m: RingConfig::bits_for(n),
                seed,
            },
            id_mode: IdMode::Dense,
            finger_selection: FingerSelection::default(),
            delivery: Delivery::default(),
            gossip: GossipMode::default(),
            trace_messages: false,
        }
    }

    /// Ring width: explicit `m` if given, else derived from the id mode.
    pub fn resolve_bits(n: usize, m: Option<u32>, id_mode: IdMode) -> u32 {
        m.unwrap_or(match id_mode {
            IdMode::Dense => RingConfig::bits_for(n),
            IdMode::Hashed => crate::ring::DEFAULT_BITS.max(RingConfig::bits_for(n) + 4),
        })
    }

    pub fn ids(&self) -> Result<Vec<NodeId>> {
        assign_ids(self.n, self.id_mode, &self.cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Split {
        fragments: Vec<Vec<NodeId>>,
    },
    Heal {
        partitions: HealTarget,
    },
    Publish {
        node: NodeId,
        name: String,
        ip: String,
        ttl: u64,
    },
    Lookup {
        origin: NodeId,
        name: String,
    },
    Kill {
        node: NodeId,
    },
    Revive {
        node: NodeId,
    },
}

impl EventKind {
    pub fn is_topology(&self) -> bool {
        matches!(
            self,
            EventKind::Split { .. }
                | EventKind::Heal { .. }
                | EventKind::Kill { .. }
                | EventKind::Revive { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub round: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    /// Ring bit width. Defaults to the smallest ring holding `0..n` in dense
    /// mode, and to 16 (or wider for large n) in hashed mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub id_mode: IdMode,
    pub max_rounds: u64,
    #[serde(default)]
    pub finger_selection: FingerSelection,
    #[serde(default)]
    pub delivery: Delivery,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSpec>,
    /// Stop early once every component has converged and no events remain.
    #[serde(default)]
    pub stop_on_convergence: bool,
    /// Log every message sent (large; meant for small demo networks).
    #[serde(default)]
    pub trace_messages: bool,
    #[serde(default)]
    pub events: Vec<ScheduledEvent>,
}

impl Scenario {
    /// A scenario with no events.
    pub fn quiet(n: usize, seed: u64, max_rounds: u64) -> Self {
        Scenario {
            schema: SCHEMA_VERSION,
            name: None,
            n,
            m: None,
            seed,
            id_mode: IdMode::Dense,
            max_rounds,
            finger_selection: FingerSelection::default(),
            delivery: Delivery::default(),
            baseline: None,
            stop_on_convergence: false,
            trace_messages: false,
            events: Vec::new(),
        }
    }

    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            n: self.n,
            cfg: RingConfig {
                m: NetworkSpec::resolve_bits(self.n, self.m, self.id_mode),
                seed: self.seed,
            },
            id_mode: self.id_mode,
            finger_selection: self.finger_selection,
            delivery: self.delivery,
            gossip: GossipMode::Structured,
            trace_messages: self.trace_messages,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema",
                format!(
                    "unsupported schema {}, expected {SCHEMA_VERSION}",
                    self.schema
                ),
            ));
        }
        if self.n == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        if let Some(m) = self.m {
            if m == 0 || m > MAX_BITS {
                return Err(Error::validation("m", format!("must be in 1..={MAX_BITS}")));
            }
        }
        if self.max_rounds == 0 {
            return Err(Error::validation("max_rounds", "must be at least 1"));
        }
        if let Some(b) = self.baseline {
            if b.fanout == 0 {
                return Err(Error::validation("baseline.fanout", "must be at least 1"));
            }
        }
        let spec = self.network_spec();
        let ids = spec
            .ids()
            .map_err(|e| Error::validation("n", e.to_string()))?;
        let mut topo = Topology::connected(&ids);

        let mut last_round = 0;
        for (i, ev) in self.events.iter().enumerate() {
            let at = |f: &str| format!("events[{i}].{f}");
            if ev.round < last_round {
                return Err(Error::validation(
                    at("round"),
                    "events must be sorted by round",
                ));
            }
            if ev.round >= self.max_rounds {
                return Err(Error::validation(at("round"), "scheduled after max_rounds"));
            }
            last_round = ev.round;
            let live = |id: NodeId, field: &str| -> Result<()> {
                if !topo.is_active(id) {
                    return Err(Error::validation(
                        at(field),
                        format!("node {id} is not a live node"),
                    ));
                }
                Ok(())
            };
            match &ev.kind {
                EventKind::Split { fragments } => {
                    topo.split(fragments)
                        .map_err(|e| Error::validation(at("fragments"), e.to_string()))?;
                }
                EventKind::Heal { partitions } => {
                    topo.heal(partitions)
                        .map_err(|e| Error::validation(at("partitions"), e.to_string()))?;
                }
                EventKind::Kill { node } => {
                    topo.kill(*node)
                        .map_err(|e| Error::validation(at("node"), e.to_string()))?;
                }
                EventKind::Revive { node } => {
                    topo.revive(*node)
                        .map_err(|e| Error::validation(at("node"), e.to_string()))?;
                }
                EventKind::Publish { node, name, .. } => {
                    live(*node, "node")?;
                    hash_name(name, &spec.cfg)
                        .map_err(|e| Error::validation(at("name"), e.to_string()))?;
                }
                EventKind::Lookup { origin, name } => {
                    if !topo.contains(*origin) {
                        return Err(Error::validation(
                            at("origin"),
                            format!("unknown node {origin}"),
                        ));
                    }
                    hash_name(name, &spec.cfg)
                        .map_err(|e| Error::validation(at("name"), e.to_string()))?;
                }
            }
        }
        Ok(())
    }
}

impl Serialize for HealTarget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HealTarget::All => s.serialize_str("all"),
            HealTarget::Segments(ids) => ids.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for HealTarget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Ids(Vec<u64>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "all" => Ok(HealTarget::All),
            Raw::Word(w) => Err(de::Error::custom(format!(
                "expected \"all\" or a list of partition ids, got \"{w}\""
            ))),
            Raw::Ids(ids) => Ok(HealTarget::Segments(ids)),
        }
    }
}
