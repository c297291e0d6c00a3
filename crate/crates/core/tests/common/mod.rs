#![allow(dead_code)]

use proptest::collection::{btree_map, vec};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use sgdns::dns::{merge_records, RecordSet};
use sgdns::{DnsRecord, NodeId, NodeSet, PartitionId, RecordVersion, VersionVector};

pub fn partition() -> impl Strategy<Value = PartitionId> {
    (0u64..64).prop_map(PartitionId)
}

pub fn version_vector() -> impl Strategy<Value = VersionVector> {
    btree_map(0u64..12, 0u64..8, 0..8).prop_map(|m| {
        let mut vv = VersionVector::new();
        for (k, v) in m {
            vv.set(NodeId(k), v);
        }
        vv
    })
}

pub fn node_set() -> impl Strategy<Value = NodeSet> {
    vec(0u64..128, 0..24).prop_map(|v| v.into_iter().map(NodeId).collect())
}

/// Small domains so that ties on every precedence field actually occur.
pub fn record() -> impl Strategy<Value = DnsRecord> {
    (0u64..4, 0u64..3, 1u64..4, 0usize..3).prop_map(|(counter, origin, ttl, ip)| DnsRecord {
        name: "host.example".into(),
        ip: ["10.0.0.1", "10.0.0.2", "10.0.0.3"][ip].into(),
        ttl,
        version: RecordVersion {
            origin: NodeId(origin),
            counter,
        },
    })
}

pub fn record_set() -> impl Strategy<Value = RecordSet> {
    vec((0usize..3, record()), 0..4).prop_map(|v| {
        let mut set = RecordSet::new();
        for (i, mut r) in v {
            r.name = format!("n{i}.example");
            merge_records(&mut set, [&r]);
        }
        set
    })
}

pub fn merge_vv(a: &VersionVector, b: &VersionVector) -> VersionVector {
    let mut out = a.clone();
    out.merge(b);
    out
}

pub fn merge_set(a: &RecordSet, b: &RecordSet) -> RecordSet {
    let mut out = a.clone();
    merge_records(&mut out, b.values());
    out
}

/// Commutativity, associativity and idempotence of `merge` on one triple.
pub fn lattice_laws<T, F>(a: &T, b: &T, c: &T, merge: F) -> Result<(), TestCaseError>
where
    T: PartialEq + std::fmt::Debug,
    F: Fn(&T, &T) -> T,
{
    prop_assert_eq!(merge(a, b), merge(b, a), "commutativity");
    prop_assert_eq!(
        merge(&merge(a, b), c),
        merge(a, &merge(b, c)),
        "associativity"
    );
    prop_assert_eq!(&merge(a, a), a, "idempotence");
    Ok(())
}

pub fn min_laws(a: PartitionId, b: PartitionId, c: PartitionId) -> Result<(), TestCaseError> {
    lattice_laws(&a, &b, &c, |x, y| *x.min(y))
}

pub fn vv_laws(
    a: &VersionVector,
    b: &VersionVector,
    c: &VersionVector,
) -> Result<(), TestCaseError> {
    lattice_laws(a, b, c, merge_vv)?;
    prop_assert!(merge_vv(a, b).dominates(a));
    Ok(())
}

pub fn union_laws(a: &NodeSet, b: &NodeSet, c: &NodeSet) -> Result<(), TestCaseError> {
    lattice_laws(a, b, c, |x, y| x | y)
}

pub fn record_laws(a: &DnsRecord, b: &DnsRecord, c: &DnsRecord) -> Result<(), TestCaseError> {
    lattice_laws(a, b, c, |x, y| DnsRecord::merge(x.clone(), y.clone()))?;
    // the winner is always one of the inputs, chosen by version first
    let w = DnsRecord::merge(a.clone(), b.clone());
    prop_assert!(w == *a || w == *b);
    prop_assert!(w.version.counter == a.version.counter.max(b.version.counter));
    Ok(())
}

pub fn record_set_laws(a: &RecordSet, b: &RecordSet, c: &RecordSet) -> Result<(), TestCaseError> {
    lattice_laws(a, b, c, merge_set)
}
