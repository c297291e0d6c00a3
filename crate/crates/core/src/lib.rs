//! Partition-tolerant Chord overlay with structured gossip, min-id partition
//! merging and a replicated name service, plus a deterministic simulator.

pub mod dns;
pub mod error;
pub mod gossip;
pub mod merger;
pub mod node;
pub mod nodeset;
pub mod ring;
pub mod sim;
pub mod version;
pub mod view;

pub use dns::{DnsRecord, LookupOutcome, LookupResult, RecordVersion};
pub use error::{Error, Result};
pub use gossip::{FingerSelection, GossipMessage};
pub use merger::MergeDecision;
pub use node::{FingerEntry, NodeState, PartitionId};
pub use nodeset::NodeSet;
pub use ring::{IdMode, NodeId, RingConfig};
pub use sim::scenario::{Delivery, EventKind, NetworkSpec, Scenario, ScheduledEvent};
pub use sim::{EventOutcome, RunOutput, Simulation};
pub use version::VersionVector;
pub use view::{PeerInfo, PeerView};
