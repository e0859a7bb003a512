//! The shipped scenario files, embedded verbatim. `emit-defaults` writes
//! these exact bytes, so hand-tuned literal values (for example trailing
//! zeros in latency figures) survive untouched rather than being
//! re-serialized.

/// Four facilities, two nodes each, heterogeneous batch queues, 40-round
/// budget.
pub const TABLE4_QUEUED: &str = include_str!("../../../scenarios/table4_queued.cfg");

/// Four facilities co-scheduled under reservation at 64-node scale, 8
/// synchronous global rounds.
pub const COSCHEDULED_64NODE: &str = include_str!("../../../scenarios/coscheduled_64node.cfg");

/// (file name, contents) for every shipped scenario.
pub const SHIPPED: &[(&str, &str)] = &[
    ("table4_queued.cfg", TABLE4_QUEUED),
    ("coscheduled_64node.cfg", COSCHEDULED_64NODE),
];
