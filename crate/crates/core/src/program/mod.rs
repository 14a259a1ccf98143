//! Sandbox for pluggable network programs.
//!
//! A [`Program`] is bound to an endpoint SID (`End.BPF`) or to a transit
//! route. It sees the packet read-only and changes it only through the
//! helpers on [`ProgramContext`]. Its [`ProgramOutcome`] then decides
//! forwarding in [`finalize`].

mod events;
mod maps;
pub mod samples;

use std::fmt;
use std::net::Ipv6Addr;
use std::sync::Arc;

use thiserror::Error;

use crate::ids::{Nexthop, NodeId, TableId};
use crate::packet::{Packet, SegmentRoutingHeader, OFFSET_FLAGS, SRH_FIXED_LEN};
use crate::srv6::{behavior, DropReason, FibError, ForwardingDecision, Node, NodeTables, SrError};

pub use events::{EmittedEvent, EventQueue, EVENT_QUEUE_CAPACITY, MAX_EVENT_PAYLOAD};
pub use maps::{MapError, MapSpec, MapStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProgramOutcome {
    /// Look the current destination up in the FIB.
    Ok,
    Drop,
    /// Forward to the destination stored by a previous action.
    Redirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hook {
    Endpoint,
    Transit,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HelperError {
    #[error("packet has no SRH")]
    NoSrh,
    #[error("write of {len} octets at SRH offset {offset} touches a read-only field")]
    WriteOutOfBounds { offset: usize, len: usize },
    #[error("bad SRH size delta {0}")]
    BadDelta(i32),
    #[error("SRH or packet would exceed its maximum size")]
    SizeOverflow,
    #[error("an action was already executed in this run")]
    ActionAlreadyTaken,
    #[error("helper not available from this hook")]
    WrongHook,
    #[error(transparent)]
    Behavior(#[from] SrError),
    #[error(transparent)]
    Fib(#[from] FibError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("event payload of {0} octets exceeds 256")]
    PayloadTooLarge(usize),
}

/// Endpoint functions reachable through [`ProgramContext::action`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    EndX(Nexthop),
    EndT(TableId),
    EndB6(SegmentRoutingHeader),
    EndB6Encaps {
        srh: SegmentRoutingHeader,
        src: Option<Ipv6Addr>,
    },
    EndDT6(TableId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncapMode {
    Insert,
    Encaps,
}

pub trait Program: Send + Sync {
    fn name(&self) -> &str;

    /// Maps the program expects on its node, created when it is bound.
    fn maps(&self) -> Vec<MapSpec> {
        Vec::new()
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome;
}

/// Shared handle to a program. Two handles are equal when they point at
/// the same instance.
#[derive(Clone)]
pub struct ProgramRef(Arc<dyn Program>);

impl ProgramRef {
    pub fn new(p: impl Program + 'static) -> Self {
        ProgramRef(Arc::new(p))
    }

    pub fn name(&self) -> &str {
        self.0.name()
    }

    pub fn maps(&self) -> Vec<MapSpec> {
        self.0.maps()
    }

    pub fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        self.0.run(ctx)
    }
}

impl fmt::Debug for ProgramRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Program({})", self.name())
    }
}

impl PartialEq for ProgramRef {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Eq for ProgramRef {}

pub struct ProgramContext<'a> {
    packet: &'a mut Packet,
    hook: Hook,
    node: NodeId,
    tables: &'a NodeTables,
    maps: &'a mut MapStore,
    events: &'a EventQueue,
    now_ns: u64,
    action_taken: bool,
}

impl<'a> ProgramContext<'a> {
    pub fn new(
        packet: &'a mut Packet,
        hook: Hook,
        node: NodeId,
        tables: &'a NodeTables,
        maps: &'a mut MapStore,
        events: &'a EventQueue,
        now_ns: u64,
    ) -> Self {
        ProgramContext {
            packet,
            hook,
            node,
            tables,
            maps,
            events,
            now_ns,
            action_taken: false,
        }
    }

    pub fn packet(&self) -> &Packet {
        self.packet
    }

    pub fn srh(&self) -> Option<&SegmentRoutingHeader> {
        self.packet.outer_srh()
    }

    pub fn hook(&self) -> Hook {
        self.hook
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn node_address(&self) -> Ipv6Addr {
        self.tables.primary_address()
    }

    pub fn action_taken(&self) -> bool {
        self.action_taken
    }

    pub fn timestamp(&self) -> u64 {
        self.now_ns
    }

    /// Writes `data` at an SRH-relative offset. Only the flags, the tag and
    /// the TLV region are writable, and the whole range must fall in one of
    /// them.
    pub fn store_bytes(&mut self, offset: usize, data: &[u8]) -> Result<(), HelperError> {
        let srh = self.packet.outer_srh_mut().ok_or(HelperError::NoSrh)?;
        let end = offset.checked_add(data.len()).ok_or(HelperError::WriteOutOfBounds {
            offset,
            len: data.len(),
        })?;
        let tlv_start = srh.tlv_offset();
        let in_fixed = offset >= OFFSET_FLAGS && end <= SRH_FIXED_LEN;
        let in_tlvs = offset >= tlv_start && end <= srh.encoded_len();
        if data.is_empty() || !(in_fixed || in_tlvs) {
            return Err(HelperError::WriteOutOfBounds {
                offset,
                len: data.len(),
            });
        }
        if in_fixed {
            let mut fixed = [srh.flags, (srh.tag >> 8) as u8, srh.tag as u8];
            fixed[offset - OFFSET_FLAGS..end - OFFSET_FLAGS].copy_from_slice(data);
            srh.flags = fixed[0];
            srh.tag = u16::from_be_bytes([fixed[1], fixed[2]]);
        } else {
            srh.tlv_bytes[offset - tlv_start..end - tlv_start].copy_from_slice(data);
        }
        self.packet.meta.srh_dirty = true;
        Ok(())
    }

    /// Grows (positive delta) or shrinks the TLV region at its start.
    /// Grown space is zero-filled.
    pub fn adjust_srh(&mut self, delta: i32) -> Result<(), HelperError> {
        let total = self.packet.encoded_len();
        let srh = self.packet.outer_srh_mut().ok_or(HelperError::NoSrh)?;
        if delta % 8 != 0 {
            return Err(HelperError::BadDelta(delta));
        }
        let magnitude = delta.unsigned_abs() as usize;
        if delta < 0 {
            if magnitude > srh.tlv_bytes.len() {
                return Err(HelperError::BadDelta(delta));
            }
            srh.tlv_bytes.drain(..magnitude);
        } else {
            let new_len = srh.encoded_len() + magnitude;
            if new_len / 8 - 1 > u8::MAX as usize || total + magnitude - crate::packet::IPV6_HEADER_LEN > u16::MAX as usize {
                return Err(HelperError::SizeOverflow);
            }
            srh.tlv_bytes.splice(0..0, std::iter::repeat(0).take(magnitude));
        }
        srh.sync_lengths();
        self.packet.refresh_lengths();
        self.packet.meta.srh_dirty = true;
        Ok(())
    }

    /// Runs an endpoint function body (the SRH was already advanced) and
    /// resolves its next hop into the pending destination.
    pub fn action(&mut self, action: Action) -> Result<(), HelperError> {
        if self.hook != Hook::Endpoint {
            return Err(HelperError::WrongHook);
        }
        if self.action_taken {
            return Err(HelperError::ActionAlreadyTaken);
        }
        // Work on a copy so a failed action leaves the packet as it was.
        let mut p = self.packet.clone();
        match &action {
            Action::EndX(nh) => p.meta.pending_destination = Some(*nh),
            Action::EndT(t) => p.meta.pending_table = Some(*t),
            Action::EndB6(srh) => behavior::push_srh(&mut p, srh)?,
            Action::EndB6Encaps { srh, src } => behavior::t_encaps(
                &mut p,
                srh,
                src.unwrap_or_else(|| self.tables.primary_address()),
                self.tables.default_hop_limit,
            )?,
            Action::EndDT6(t) => behavior::end_dt6(&mut p, *t)?,
        }
        if p.meta.pending_destination.is_none() && !self.tables.is_local(p.dst()) {
            let table = p.meta.pending_table.unwrap_or(TableId::MAIN);
            let nh = self.tables.fib_lookup(p.dst(), table, &crate::srv6::FlowKey::of(&p))?;
            p.meta.pending_destination = Some(nh);
        }
        *self.packet = p;
        self.action_taken = true;
        Ok(())
    }

    /// Inserts an SRH into, or encapsulates, a plain IPv6 packet.
    pub fn push_encap(
        &mut self,
        mode: EncapMode,
        srh: &SegmentRoutingHeader,
        src: Option<Ipv6Addr>,
    ) -> Result<(), HelperError> {
        if self.hook != Hook::Transit {
            return Err(HelperError::WrongHook);
        }
        let mut p = self.packet.clone();
        match mode {
            EncapMode::Insert => behavior::t_insert(&mut p, srh)?,
            EncapMode::Encaps => behavior::t_encaps(
                &mut p,
                srh,
                src.unwrap_or_else(|| self.tables.primary_address()),
                self.tables.default_hop_limit,
            )?,
        }
        *self.packet = p;
        self.packet.meta.srh_dirty = true;
        Ok(())
    }

    /// ECMP nexthops for `addr` in the main table.
    pub fn ecmp_nexthops(&self, addr: Ipv6Addr) -> Result<Vec<Nexthop>, HelperError> {
        Ok(self.tables.fib.ecmp_list(addr, TableId::MAIN)?.to_vec())
    }

    pub fn map_get(&self, map: &str, key: &[u8]) -> Result<Option<Vec<u8>>, HelperError> {
        Ok(self.maps.get(map, key)?.map(<[u8]>::to_vec))
    }

    pub fn map_put(&mut self, map: &str, key: &[u8], value: &[u8]) -> Result<(), HelperError> {
        Ok(self.maps.put(map, key, value)?)
    }

    pub fn emit_event(&mut self, payload: &[u8]) -> Result<(), HelperError> {
        if payload.len() > MAX_EVENT_PAYLOAD {
            return Err(HelperError::PayloadTooLarge(payload.len()));
        }
        self.events.push(EmittedEvent {
            node: self.node,
            timestamp_ns: self.now_ns,
            payload: payload.to_vec(),
        });
        Ok(())
    }
}

/// Turns a program outcome into a forwarding decision. A packet whose SRH
/// was touched must still pass validation. `action_taken` lets a redirect
/// deliver locally when an action left a local destination.
pub fn finalize(
    tables: &NodeTables,
    packet: &mut Packet,
    outcome: ProgramOutcome,
    action_taken: bool,
) -> ForwardingDecision {
    if packet.meta.srh_dirty && (packet.validate_srhs().is_err() || packet.check().is_err()) {
        return ForwardingDecision::Drop(DropReason::InvalidSrhAfterProgram);
    }
    match outcome {
        ProgramOutcome::Drop => ForwardingDecision::Drop(DropReason::ProgramDrop),
        ProgramOutcome::Ok => {
            packet.meta.pending_destination = None;
            tables.resolve(packet)
        }
        ProgramOutcome::Redirect => {
            if packet.meta.pending_destination.is_some() {
                tables.resolve(packet)
            } else if action_taken && tables.is_local(packet.dst()) {
                ForwardingDecision::LocalDeliver
            } else {
                ForwardingDecision::Drop(DropReason::RedirectWithoutDestination)
            }
        }
    }
}

/// Runs a program bound to an endpoint SID: End first, then the program.
pub fn run_endpoint_program(node: &mut Node, program: &ProgramRef, packet: &mut Packet, now: u64) -> ForwardingDecision {
    if let Err(e) = behavior::end(packet) {
        return ForwardingDecision::Drop(e.into());
    }
    run_hook(node, program, packet, now, Hook::Endpoint)
}

pub fn run_transit_program(node: &mut Node, program: &ProgramRef, packet: &mut Packet, now: u64) -> ForwardingDecision {
    run_hook(node, program, packet, now, Hook::Transit)
}

fn run_hook(node: &mut Node, program: &ProgramRef, packet: &mut Packet, now: u64, hook: Hook) -> ForwardingDecision {
    let (outcome, action_taken) = {
        let mut ctx = ProgramContext::new(packet, hook, node.id, &node.tables, &mut node.maps, &node.events, now);
        let outcome = program.run(&mut ctx);
        (outcome, ctx.action_taken)
    };
    finalize(&node.tables, packet, outcome, action_taken)
}
