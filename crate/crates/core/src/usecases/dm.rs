//! Passive one-way delay monitoring: a transit program samples traffic
//! into timestamped probes, End.DM terminates them and reports both
//! timestamps to a collector.

use std::any::Any;
use std::net::Ipv6Addr;

use thiserror::Error;

use crate::ids::{NodeId, TableId};
use crate::netsim::{Daemon, Simulation};
use crate::packet::SegmentRoutingHeader;
use crate::program::{
    Action, EmittedEvent, EncapMode, EventQueue, MapSpec, Program, ProgramContext, ProgramOutcome,
};

use super::tlvs::{dm_probe_tlvs, read_controller, read_dm, Controller};

pub const DM_EVENT_LEN: usize = 38;
const COUNTER_MAP: &str = "dm_counters";

/// Encapsulates every N-th packet of its route into a probe along `path`.
/// The SRH tag carries the path id.
#[derive(Debug, Clone)]
pub struct DmTransit {
    pub ratio: u64,
    pub path: Vec<Ipv6Addr>,
    pub path_id: u16,
    pub controller: Controller,
    pub src: Option<Ipv6Addr>,
}

impl DmTransit {
    pub fn new(ratio: u64, path: Vec<Ipv6Addr>, path_id: u16, controller: Controller) -> Self {
        assert!(ratio >= 1, "probing ratio must be at least 1");
        DmTransit {
            ratio,
            path,
            path_id,
            controller,
            src: None,
        }
    }

    fn probe_srh(&self, tx_ns: u64) -> SegmentRoutingHeader {
        SegmentRoutingHeader::from_path(&self.path)
            .with_tlvs(dm_probe_tlvs(tx_ns, self.controller))
            .with_tag(self.path_id)
    }
}

impl Program for DmTransit {
    fn name(&self) -> &str {
        "dm_transit"
    }

    fn maps(&self) -> Vec<MapSpec> {
        vec![MapSpec::new(COUNTER_MAP, 4, 8)]
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        let key = u32::from(self.path_id).to_be_bytes();
        let count = match ctx.map_get(COUNTER_MAP, &key) {
            Ok(Some(v)) => v.try_into().map(u64::from_be_bytes).unwrap_or(0),
            _ => 0,
        };
        if ctx.map_put(COUNTER_MAP, &key, &(count + 1).to_be_bytes()).is_err() {
            return ProgramOutcome::Ok;
        }
        if count % self.ratio == 0 {
            let srh = self.probe_srh(ctx.timestamp());
            if let Err(e) = ctx.push_encap(EncapMode::Encaps, &srh, self.src) {
                log::warn!("probe encapsulation failed: {e}");
            }
        }
        ProgramOutcome::Ok
    }
}

/// End.DM. At the last segment it reports the delay and decapsulates;
/// earlier in the list (two-way probes) it forwards untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct EndDm;

impl Program for EndDm {
    fn name(&self) -> &str {
        "end_dm"
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        let Some(srh) = ctx.srh() else {
            return ProgramOutcome::Drop;
        };
        let (Some(tx), Some(ctrl)) = (read_dm(srh), read_controller(srh)) else {
            return ProgramOutcome::Drop;
        };
        if srh.segments_left > 0 {
            return ProgramOutcome::Ok;
        }
        let record = DmEvent {
            path_id: u32::from(srh.tag),
            tx_ns: tx,
            rx_ns: ctx.packet().meta.rx_timestamp_ns,
            controller: ctrl,
        };
        if ctx.emit_event(&record.to_bytes()).is_err() {
            return ProgramOutcome::Drop;
        }
        match ctx.action(Action::EndDT6(TableId::MAIN)) {
            Ok(()) => ProgramOutcome::Redirect,
            Err(_) => ProgramOutcome::Drop,
        }
    }
}

/// Payload of a delay event: path_id:4, tx:8, rx:8, controller addr:16,
/// controller port:2, all big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmEvent {
    pub path_id: u32,
    pub tx_ns: u64,
    pub rx_ns: u64,
    pub controller: Controller,
}

impl DmEvent {
    pub fn to_bytes(&self) -> [u8; DM_EVENT_LEN] {
        let mut b = [0; DM_EVENT_LEN];
        b[..4].copy_from_slice(&self.path_id.to_be_bytes());
        b[4..12].copy_from_slice(&self.tx_ns.to_be_bytes());
        b[12..20].copy_from_slice(&self.rx_ns.to_be_bytes());
        b[20..].copy_from_slice(&self.controller.to_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != DM_EVENT_LEN {
            return None;
        }
        Some(DmEvent {
            path_id: u32::from_be_bytes(b[..4].try_into().ok()?),
            tx_ns: u64::from_be_bytes(b[4..12].try_into().ok()?),
            rx_ns: u64::from_be_bytes(b[12..20].try_into().ok()?),
            controller: Controller::from_bytes(&b[20..])?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayRecord {
    pub path_id: u32,
    pub tx_ts_ns: u64,
    pub rx_ts_ns: u64,
    pub owd_ns: i64,
    pub controller: Controller,
}

impl From<DmEvent> for DelayRecord {
    fn from(e: DmEvent) -> Self {
        DelayRecord {
            path_id: e.path_id,
            tx_ts_ns: e.tx_ns,
            rx_ts_ns: e.rx_ns,
            owd_ns: e.rx_ns as i64 - e.tx_ns as i64,
            controller: e.controller,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("malformed delay event of {len} octets from node {node}")]
pub struct MalformedEvent {
    pub node: NodeId,
    pub len: usize,
}

pub fn decode_event(e: &EmittedEvent) -> Result<DelayRecord, MalformedEvent> {
    DmEvent::from_bytes(&e.payload)
        .map(DelayRecord::from)
        .ok_or(MalformedEvent {
            node: e.node,
            len: e.payload.len(),
        })
}

/// Drains `queue`, returning decoded records and the malformed count.
pub fn owd_collector_drain(queue: &EventQueue) -> (Vec<DelayRecord>, u64) {
    let mut records = Vec::new();
    let mut malformed = 0;
    for e in queue.drain() {
        match decode_event(&e) {
            Ok(r) => records.push(r),
            Err(err) => {
                log::warn!("{err}");
                malformed += 1;
            }
        }
    }
    (records, malformed)
}

/// Collects delay records from the End.DM node it is attached to.
#[derive(Debug, Default)]
pub struct OwdCollector {
    pub node: Option<NodeId>,
    pub records: Vec<DelayRecord>,
    pub malformed: u64,
}

impl OwdCollector {
    pub fn new(node: NodeId) -> Self {
        OwdCollector {
            node: Some(node),
            ..Default::default()
        }
    }

    pub fn drain_from(&mut self, queue: &EventQueue) {
        let (records, malformed) = owd_collector_drain(queue);
        self.records.extend(records);
        self.malformed += malformed;
    }
}

impl Daemon for OwdCollector {
    fn name(&self) -> &str {
        "owd_collector"
    }

    fn wake(&mut self, sim: &mut Simulation) {
        if let Some(n) = self.node {
            let queue = sim.node(n).events.clone();
            self.drain_from(&queue);
            // packets delivered here are not ours to keep
            sim.take_inbox(n);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwdSummary {
    pub count: usize,
    pub mean_ns: f64,
    pub min_ns: i64,
    pub max_ns: i64,
    pub p99_ns: i64,
}

/// Summary statistics; p99 uses the nearest-rank method.
pub fn summarize(records: &[DelayRecord]) -> Option<OwdSummary> {
    if records.is_empty() {
        return None;
    }
    let mut owds: Vec<i64> = records.iter().map(|r| r.owd_ns).collect();
    owds.sort_unstable();
    let n = owds.len();
    let rank = (0.99 * n as f64).ceil() as usize;
    Some(OwdSummary {
        count: n,
        mean_ns: owds.iter().map(|&v| v as f64).sum::<f64>() / n as f64,
        min_ns: owds[0],
        max_ns: owds[n - 1],
        p99_ns: owds[rank.clamp(1, n) - 1],
    })
}
