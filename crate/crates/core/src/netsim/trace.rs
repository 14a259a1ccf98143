//! Packet traces and the metrics computed from them.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::ids::NodeId;
use crate::packet::Packet;

/// Stream payloads start with this tag, then flow id and sequence number.
pub const STREAM_MAGIC: [u8; 4] = *b"SIMS";
pub const STREAM_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Ingress,
    Egress,
    Drop,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Ingress => "ingress",
            Direction::Egress => "egress",
            Direction::Drop => "drop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_ns: u64,
    pub node: NodeId,
    pub direction: Direction,
    pub flow: Option<u32>,
    pub seq: Option<u32>,
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TraceMode {
    #[default]
    All,
    Off,
    Nodes(HashSet<NodeId>),
}

impl TraceMode {
    pub fn includes(&self, node: NodeId) -> bool {
        match self {
            TraceMode::All => true,
            TraceMode::Off => false,
            TraceMode::Nodes(s) => s.contains(&node),
        }
    }
}

pub fn stream_payload(flow: u32, seq: u32, size: usize) -> Vec<u8> {
    let mut v = Vec::with_capacity(size.max(STREAM_HEADER_LEN));
    v.extend_from_slice(&STREAM_MAGIC);
    v.extend_from_slice(&flow.to_be_bytes());
    v.extend_from_slice(&seq.to_be_bytes());
    v.resize(size.max(STREAM_HEADER_LEN), 0);
    v
}

/// Flow id and sequence number of a stream packet, if it is one.
pub fn stream_ids(p: &Packet) -> Option<(u32, u32)> {
    let payload = &p.udp_datagram()?.payload;
    if payload.len() < STREAM_HEADER_LEN || payload[..4] != STREAM_MAGIC {
        return None;
    }
    let flow = u32::from_be_bytes(payload[4..8].try_into().ok()?);
    let seq = u32::from_be_bytes(payload[8..12].try_into().ok()?);
    Some((flow, seq))
}

/// Writes one tab-separated line per record:
/// time_ns, node, direction, flow, seq, size. Missing ids print as `-`.
pub fn write_tsv<W: Write>(mut w: W, records: &[TraceRecord], node_names: &[String]) -> io::Result<()> {
    for r in records {
        let name = node_names
            .get(r.node.0 as usize)
            .map(String::as_str)
            .unwrap_or("?");
        let opt = |v: Option<u32>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.time_ns,
            name,
            r.direction,
            opt(r.flow),
            opt(r.seq),
            r.size
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("not enough records for flow {flow}")]
    InsufficientData { flow: u32 },
}

fn arrivals(trace: &[TraceRecord], flow: u32, sink: NodeId) -> impl Iterator<Item = &TraceRecord> {
    trace
        .iter()
        .filter(move |r| r.node == sink && r.direction == Direction::Ingress && r.flow == Some(flow) && r.seq.is_some())
}

/// Share of arrivals at `sink` whose sequence number is below the highest
/// one already seen.
pub fn reorder_fraction(trace: &[TraceRecord], flow: u32, sink: NodeId) -> Result<f64, MetricError> {
    let mut max_seen: Option<u32> = None;
    let mut total = 0u64;
    let mut late = 0u64;
    for r in arrivals(trace, flow, sink) {
        let seq = r.seq.unwrap_or_default();
        total += 1;
        match max_seen {
            Some(m) if seq < m => late += 1,
            _ => max_seen = Some(seq),
        }
    }
    if total < 2 {
        return Err(MetricError::InsufficientData { flow });
    }
    Ok(late as f64 / total as f64)
}

/// Delivered bits per second at `sink`, charging `stall_penalty_ns` each
/// time an arrival runs more than `gap_threshold` sequence numbers ahead
/// of the lowest missing one (once per hole, like a triple duplicate ack).
pub fn goodput_estimate(
    trace: &[TraceRecord],
    flow: u32,
    sink: NodeId,
    gap_threshold: u32,
    stall_penalty_ns: u64,
) -> Result<f64, MetricError> {
    let mut first = None;
    let mut last = 0u64;
    let mut bits = 0u64;
    let mut count = 0u64;
    let mut next_expected = 0u32;
    let mut pending = BTreeSet::new();
    let mut penalized_hole: Option<u32> = None;
    let mut penalties = 0u64;
    for r in arrivals(trace, flow, sink) {
        let seq = r.seq.unwrap_or_default();
        first.get_or_insert(r.time_ns);
        last = r.time_ns;
        bits += u64::from(r.size) * 8;
        count += 1;
        if seq < next_expected {
            continue;
        }
        pending.insert(seq);
        while pending.remove(&next_expected) {
            next_expected += 1;
        }
        if seq >= next_expected && seq - next_expected > gap_threshold && penalized_hole != Some(next_expected) {
            penalized_hole = Some(next_expected);
            penalties += 1;
        }
    }
    let Some(first) = first else {
        return Err(MetricError::InsufficientData { flow });
    };
    let span = last - first + penalties * stall_penalty_ns;
    if count < 2 || span == 0 {
        return Err(MetricError::InsufficientData { flow });
    }
    Ok(bits as f64 * 1e9 / span as f64)
}
