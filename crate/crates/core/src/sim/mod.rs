//! Deterministic lock-step simulator.
//!
//! A round runs in a fixed order: deliver last round's messages, apply
//! scheduled events, stabilize and repair fingers, select targets and send,
//! detect cross-partition links, run the merger, age DNS records, then
//! record metrics and check invariants.
//!
//! Between rounds the simulator is parked right after delivery, which is
//! where both scheduled events and control-API commands are applied. The
//! CLI and the control service therefore drive exactly the same code path.

pub mod invariants;
pub mod log;
pub mod metrics;
pub mod scenario;
pub mod sweep;
pub mod topology;

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dns::{self, DnsRecord, LookupResult};
use crate::error::{Error, Result};
use crate::gossip::{self, GossipMessage};
use crate::merger::{self, MergeDecision};
use crate::node::{NodeState, PartitionId};
use crate::nodeset::NodeSet;
use crate::ring::{NodeId, RingConfig};
use crate::view::{PeerInfo, PeerView};

use self::invariants::{check_invariants, History};
use self::log::{LogEntry, LogEvent, MessageKind};
use self::metrics::{convergence_round, ComponentStatus, RoundMetrics, RunSummary};
use self::scenario::{Delivery, EventKind, GossipMode, NetworkSpec, Scenario};
use self::topology::{HealTarget, Topology};

const STREAM_BASELINE: u64 = 0x6261_7365_6c69_6e65;
const STREAM_DELIVERY: u64 = 0x6465_6c69_7665_7279;

#[derive(Clone, Debug)]
enum Payload {
    Gossip(GossipMessage),
    Records(Vec<DnsRecord>),
}

#[derive(Clone, Debug)]
struct Envelope {
    from: NodeId,
    to: NodeId,
    payload: Payload,
}

/// What an applied event produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EventOutcome {
    Split { partition_ids: Vec<PartitionId> },
    Heal { merged: u64 },
    Lookup(LookupResult),
    Done,
}

pub struct Simulation {
    spec: NetworkSpec,
    ids: Vec<NodeId>,
    states: BTreeMap<NodeId, NodeState>,
    topology: Topology,
    round: u64,
    log: Vec<LogEntry>,
    metrics: Vec<RoundMetrics>,
    merges: Vec<MergeDecision>,
    history: History,
    topology_changed: bool,
    was_converged: BTreeMap<NodeId, bool>,
    baseline_rng: ChaCha8Rng,
    delivery_rng: ChaCha8Rng,
    received: BTreeMap<NodeId, u64>,
}

impl Simulation {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let cfg = RingConfig::new(spec.cfg.m, spec.cfg.seed)?;
        if let GossipMode::Baseline { fanout: 0 } = spec.gossip {
            return Err(Error::invalid("baseline fanout must be at least 1"));
        }
        let ids = spec.ids()?;
        let states = ids
            .iter()
            .map(|&id| Ok((id, NodeState::build_initial(id, &ids, &cfg)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let topology = Topology::connected(&ids);
        let mut sim = Simulation {
            baseline_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ STREAM_BASELINE),
            delivery_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ STREAM_DELIVERY),
            spec,
            ids,
            states,
            topology,
            round: 0,
            log: Vec::new(),
            metrics: Vec::new(),
            merges: Vec::new(),
            history: History::default(),
            topology_changed: true,
            was_converged: BTreeMap::new(),
            received: BTreeMap::new(),
        };
        sim.history.prev_vv = History::snapshot_vv(&sim.states);
        sim.refresh_floors();
        sim.emit(LogEvent::Network {
            n: sim.spec.n,
            m: sim.spec.cfg.m,
            seed: sim.spec.cfg.seed,
            id_mode: sim.spec.id_mode,
            finger_selection: sim.spec.finger_selection,
            ids: sim.ids.clone(),
        });
        Ok(sim)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn cfg(&self) -> &RingConfig {
        &self.spec.cfg
    }

    /// Round whose events are being accepted.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn states(&self) -> &BTreeMap<NodeId, NodeState> {
        &self.states
    }

    /// Direct access for fault-injection tests of the checker itself.
    pub fn states_mut(&mut self) -> &mut BTreeMap<NodeId, NodeState> {
        &mut self.states
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Entries with `seq > since`.
    pub fn log_since(&self, since: Option<u64>) -> &[LogEntry] {
        let start = match since {
            None => 0,
            Some(s) => self.log.partition_point(|e| e.seq <= s),
        };
        &self.log[start..]
    }

    pub fn metrics(&self) -> &[RoundMetrics] {
        &self.metrics
    }

    pub fn merge_decisions(&self) -> &[MergeDecision] {
        &self.merges
    }

    pub fn view(&self) -> PeerView {
        PeerView::new(self.states.iter().map(|(&id, s)| {
            (
                id,
                PeerInfo {
                    active: self.topology.is_active(id),
                    segment: self
                        .topology
                        .segment_of(id)
                        .expect("every node has a segment"),
                    partition: s.partition_id,
                },
            )
        }))
    }

    pub fn components(&self) -> Vec<NodeSet> {
        self.topology.components()
    }

    pub fn converged(&self) -> BTreeMap<NodeId, bool> {
        merger::partitions_converged(&self.states, &self.components())
    }

    fn emit(&mut self, event: LogEvent) {
        let seq = self.log.len() as u64;
        self.log.push(LogEntry {
            seq,
            round: self.round,
            event,
        });
    }

    fn refresh_floors(&mut self) {
        self.history.floors = History::floors_of(&self.states, &self.topology.components());
    }

    fn after_topology_change(&mut self) {
        self.topology_changed = true;
        self.was_converged.clear();
        for (&id, s) in self.states.iter_mut() {
            s.active = self.topology.is_active(id);
        }
        let view = self.view();
        for s in self.states.values_mut().filter(|s| s.active) {
            s.invalidate_unreachable(&view);
        }
        self.refresh_floors();
    }

    /// Applies one event in the current round.
    pub fn apply(&mut self, kind: &EventKind) -> Result<EventOutcome> {
        match kind {
            EventKind::Split { fragments } => {
                let assigned = self.topology.split(fragments)?;
                for (id, p) in &assigned {
                    self.states
                        .get_mut(id)
                        .expect("validated by split")
                        .assign_partition(*p);
                }
                let partition_ids: Vec<PartitionId> =
                    fragments.iter().map(|f| assigned[&f[0]]).collect();
                self.after_topology_change();
                self.emit(LogEvent::Split {
                    fragments: fragments.clone(),
                    partition_ids: partition_ids.clone(),
                });
                Ok(EventOutcome::Split { partition_ids })
            }
            EventKind::Heal { partitions } => {
                let merged = self.topology.heal(partitions)?;
                let listed = match partitions {
                    HealTarget::All => Vec::new(),
                    HealTarget::Segments(s) => s.clone(),
                };
                self.after_topology_change();
                self.emit(LogEvent::Heal {
                    partitions: listed,
                    merged,
                });
                Ok(EventOutcome::Heal { merged })
            }
            EventKind::Kill { node } => {
                self.topology.kill(*node)?;
                self.after_topology_change();
                self.emit(LogEvent::Kill { node: *node });
                Ok(EventOutcome::Done)
            }
            EventKind::Revive { node } => {
                self.topology.revive(*node)?;
                self.after_topology_change();
                self.emit(LogEvent::Revive { node: *node });
                Ok(EventOutcome::Done)
            }
            EventKind::Publish {
                node,
                name,
                ip,
                ttl,
            } => {
                let view = self.view();
                let cfg = self.spec.cfg;
                let r = dns::publish(*node, name, ip, *ttl, &mut self.states, &view, &cfg)?;
                let rec = r.record.clone().expect("publish always stores");
                self.emit(LogEvent::Publish {
                    node: *node,
                    name: name.clone(),
                    ip: ip.clone(),
                    ttl: *ttl,
                    stored_at: *r.path.last().expect("non-empty path"),
                    version: rec.version,
                    hops: r.hops,
                    path: r.path.clone(),
                });
                Ok(EventOutcome::Lookup(r))
            }
            EventKind::Lookup { origin, name } => {
                if !self.topology.contains(*origin) {
                    return Err(Error::invalid(format!("unknown node {origin}")));
                }
                let r = dns::lookup(*origin, name, &self.states, &self.view(), &self.spec.cfg)?;
                self.emit(LogEvent::Lookup {
                    origin: *origin,
                    name: name.clone(),
                    outcome: r.outcome,
                    hops: r.hops,
                    path: r.path.clone(),
                    ip: r.record.as_ref().map(|x| x.ip.clone()),
                    degraded: r.degraded,
                });
                Ok(EventOutcome::Lookup(r))
            }
        }
    }

    /// Runs the rest of the current round, then delivers its messages as the
    /// start of the next one.
    pub fn finish_round(&mut self) -> &RoundMetrics {
        let round = self.round;
        let cfg = self.spec.cfg;
        let view = self.view();
        let live: Vec<NodeId> = self
            .states
            .values()
            .filter(|s| s.active)
            .map(|s| s.id)
            .collect();

        for id in &live {
            let s = self.states.get_mut(id).expect("live node");
            s.stabilize(&view);
            s.repair_fingers(&view);
        }

        let mut outbox = Vec::new();
        let (mut gossip_sent, mut record_sent, mut baseline_sent) = (0u64, 0u64, 0u64);
        for id in &live {
            let s = &self.states[id];
            let targets: Vec<NodeId> = match self.spec.gossip {
                GossipMode::Structured => {
                    gossip::select_targets(s, &view, &cfg, self.spec.finger_selection, round)
                        .distinct()
                        .collect()
                }
                GossipMode::Baseline { fanout } => {
                    let pool: Vec<NodeId> = view
                        .reachable_from(*id)
                        .iter()
                        .filter(|&j| j != *id)
                        .collect();
                    let k = fanout.min(pool.len());
                    sample(&mut self.baseline_rng, pool.len(), k)
                        .into_iter()
                        .map(|i| pool[i])
                        .collect()
                }
            };
            if targets.is_empty() {
                continue;
            }
            let msg = gossip::make_message(s);
            let records: Vec<DnsRecord> = s.dns_records.values().cloned().collect();
            for &to in &targets {
                match self.spec.gossip {
                    GossipMode::Structured => gossip_sent += 1,
                    GossipMode::Baseline { .. } => baseline_sent += 1,
                }
                outbox.push(Envelope {
                    from: *id,
                    to,
                    payload: Payload::Gossip(msg.clone()),
                });
                if !records.is_empty() {
                    record_sent += 1;
                    outbox.push(Envelope {
                        from: *id,
                        to,
                        payload: Payload::Records(records.clone()),
                    });
                }
            }
        }
        if self.spec.trace_messages {
            for e in &outbox {
                let (kind, msg) = match &e.payload {
                    Payload::Gossip(m) => (MessageKind::Gossip, Some(m.clone())),
                    Payload::Records(_) => (MessageKind::Records, None),
                };
                self.emit(LogEvent::Send {
                    kind,
                    from: e.from,
                    to: e.to,
                    msg,
                });
            }
        }

        for id in &live {
            gossip::detect_cross_partition(self.states.get_mut(id).expect("live node"), &view);
        }

        // the merger reads peers' partitions as they stood before this phase
        let mut decisions = Vec::new();
        for id in &live {
            let s = self.states.get_mut(id).expect("live node");
            if let Some(d) = merger::merger_step(s, &view, round) {
                decisions.push(d);
            }
        }
        for d in &decisions {
            self.emit(LogEvent::Merge {
                node: d.node,
                from: d.from,
                to: d.to,
            });
        }
        let merges = decisions.len();
        self.merges.extend(decisions);

        for id in &live {
            self.states.get_mut(id).expect("live node").age_records();
        }

        let end_view = self.view();
        let components = self.components();
        let violations = check_invariants(&self.states, &end_view, &components, &self.history);
        let mut statuses = BTreeMap::new();
        let mut newly_converged = Vec::new();
        for c in &components {
            let key = c.min().expect("non-empty component");
            let converged = merger::component_converged(&self.states, c);
            let partition = if converged {
                Some(self.states[&key].partition_id)
            } else {
                None
            };
            if converged && !self.was_converged.get(&key).copied().unwrap_or(false) {
                newly_converged.push((key, partition.expect("converged"), c.len()));
            }
            statuses.insert(
                key,
                ComponentStatus {
                    size: c.len(),
                    converged,
                    partition,
                },
            );
        }
        self.was_converged = statuses.iter().map(|(k, s)| (*k, s.converged)).collect();
        for (component, partition, size) in newly_converged {
            self.emit(LogEvent::Converged {
                component,
                partition,
                size,
            });
        }
        for v in &violations {
            self.emit(LogEvent::Violation(v.clone()));
        }
        let max_received = std::mem::take(&mut self.received)
            .into_values()
            .max()
            .unwrap_or(0);
        let m = RoundMetrics {
            round,
            gossip_sent,
            record_sent,
            baseline_sent,
            max_received,
            active_nodes: live.len(),
            components: statuses,
            violations,
            merges,
            topology_changed: std::mem::replace(&mut self.topology_changed, false),
        };
        self.emit(LogEvent::Round {
            gossip_sent,
            record_sent,
            baseline_sent,
            components: m.components.len(),
            converged: m.converged_count(),
            merges,
            violations: m.violations.len(),
        });
        self.metrics.push(m);
        self.history.prev_vv = History::snapshot_vv(&self.states);

        self.round += 1;
        self.deliver(outbox, &end_view);
        self.metrics.last().expect("just pushed")
    }

    fn deliver(&mut self, mut outbox: Vec<Envelope>, view: &PeerView) {
        match self.spec.delivery {
            Delivery::Ordered => {}
            Delivery::Shuffled => outbox.shuffle(&mut self.delivery_rng),
            Delivery::ShuffledDuplicated => {
                let mut doubled = Vec::with_capacity(outbox.len() * 2);
                for e in outbox {
                    if self.delivery_rng.random_bool(0.5) {
                        doubled.push(e.clone());
                    }
                    doubled.push(e);
                }
                doubled.shuffle(&mut self.delivery_rng);
                outbox = doubled;
            }
        }
        let round = self.round;
        for e in outbox {
            let Some(s) = self.states.get_mut(&e.to).filter(|s| s.active) else {
                continue;
            };
            match &e.payload {
                Payload::Gossip(msg) => {
                    gossip::receive_gossip(s, msg, view, round);
                    *self.received.entry(e.to).or_default() += 1;
                }
                Payload::Records(records) => {
                    // one round spent in transit
                    let aged: Vec<DnsRecord> = records
                        .iter()
                        .filter(|r| r.ttl > 1)
                        .map(|r| DnsRecord {
                            ttl: r.ttl - 1,
                            ..r.clone()
                        })
                        .collect();
                    s.anti_entropy_records(&aged);
                }
            }
        }
    }

    pub fn all_converged(&self) -> bool {
        self.converged().values().all(|c| *c)
    }

    pub fn summary(&self) -> RunSummary {
        summarize(
            &self.metrics,
            &self.states,
            &self.topology,
            self.merges.len(),
        )
    }
}

fn summarize(
    series: &[RoundMetrics],
    states: &BTreeMap<NodeId, NodeState>,
    topo: &Topology,
    merges: usize,
) -> RunSummary {
    let mut final_partitions = BTreeMap::new();
    for s in states.values().filter(|s| topo.is_active(s.id)) {
        *final_partitions.entry(s.partition_id).or_insert(0) += 1;
    }
    let convergence = convergence_round(series);
    RunSummary {
        rounds_run: series.len() as u64,
        all_converged: !convergence.is_empty() && convergence.values().all(Option::is_some),
        convergence,
        final_partitions,
        gossip_sent: series.iter().map(|m| m.gossip_sent).sum(),
        record_sent: series.iter().map(|m| m.record_sent).sum(),
        baseline_sent: series.iter().map(|m| m.baseline_sent).sum(),
        max_gossip_sent_per_round: series.iter().map(|m| m.gossip_sent).max().unwrap_or(0),
        max_received_per_round: series.iter().map(|m| m.max_received).max().unwrap_or(0),
        merge_decisions: merges,
        violations: series.iter().map(|m| m.violations.len()).sum(),
    }
}

/// Everything a finished run produced.
pub struct RunOutput {
    pub log: Vec<LogEntry>,
    pub metrics: Vec<RoundMetrics>,
    pub states: BTreeMap<NodeId, NodeState>,
    pub merges: Vec<MergeDecision>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn violations(&self) -> impl Iterator<Item = &invariants::Violation> {
        self.metrics.iter().flat_map(|m| m.violations.iter())
    }
}

fn drive(spec: NetworkSpec, scenario: &Scenario, rounds: Option<u64>) -> Result<Simulation> {
    let mut sim = Simulation::new(spec)?;
    let mut events = scenario.events.iter().peekable();
    let max_rounds = rounds.unwrap_or(scenario.max_rounds);
    for r in 0..max_rounds {
        while let Some(ev) = events.next_if(|e| e.round == r) {
            sim.apply(&ev.kind)?;
        }
        let done = sim.finish_round().all_converged();
        if rounds.is_none() && scenario.stop_on_convergence && done && events.peek().is_none() {
            break;
        }
    }
    Ok(sim)
}

/// Runs a scenario to completion. When the scenario names a baseline, an
/// unstructured run over the same events fills the `baseline_sent` column.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let sim = drive(scenario.network_spec(), scenario, None)?;
    let Simulation {
        log,
        mut metrics,
        states,
        merges,
        topology,
        ..
    } = sim;
    if let Some(b) = scenario.baseline {
        let mut spec = scenario.network_spec();
        spec.gossip = GossipMode::Baseline { fanout: b.fanout };
        spec.trace_messages = false;
        let shadow = drive(spec, scenario, Some(metrics.len() as u64))?;
        for (m, s) in metrics.iter_mut().zip(shadow.metrics()) {
            m.baseline_sent = s.baseline_sent;
        }
    }
    let summary = summarize(&metrics, &states, &topology, merges.len());
    Ok(RunOutput {
        log,
        metrics,
        states,
        merges,
        summary,
    })
}

/// Runs the scenario's events with unstructured fanout-`k` gossip instead of
/// the structured protocol.
pub fn run_baseline(scenario: &Scenario, fanout: usize) -> Result<Vec<RoundMetrics>> {
    if fanout == 0 {
        return Err(Error::invalid("baseline fanout must be at least 1"));
    }
    scenario.validate()?;
    let mut spec = scenario.network_spec();
    spec.gossip = GossipMode::Baseline { fanout };
    spec.trace_messages = false;
    Ok(drive(spec, scenario, None)?.metrics)
}
