//! Per-node SRv6 dataplane.
//!
//! [`process_ingress`] runs the receive pipeline: hop limit, local SID
//! dispatch, transit behaviors, then a FIB lookup. Locally generated
//! packets enter through [`originate`] instead.

pub mod behavior;
pub mod fib;
pub mod icmp;

use std::collections::HashMap;
use std::net::Ipv6Addr;

use thiserror::Error;

use crate::ids::{LinkId, Nexthop, NodeId, TableId};
use crate::packet::{Packet, SegmentRoutingHeader};
use crate::program::{self, EventQueue, MapStore, ProgramRef};

pub use behavior::SrError;
pub use fib::{Fib, FibEntry, FibError, FlowKey, Prefix, PrefixTable};

pub const DEFAULT_HOP_LIMIT: u8 = 64;

/// UDP ports that make the destination host answer with a port-unreachable
/// error, as traceroute expects.
pub const TRACEROUTE_PORTS: std::ops::RangeInclusive<u16> = 33434..=33534;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalBehavior {
    End,
    EndX(Nexthop),
    EndT(TableId),
    EndB6(SegmentRoutingHeader),
    EndB6Encaps {
        srh: SegmentRoutingHeader,
        src: Option<Ipv6Addr>,
    },
    EndDT6(TableId),
    EndBpf(ProgramRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransitBehavior {
    Insert(SegmentRoutingHeader),
    Encaps {
        srh: SegmentRoutingHeader,
        src: Option<Ipv6Addr>,
    },
    Program(ProgramRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Error)]
pub enum DropReason {
    #[error("hop limit exceeded")]
    HopLimitExceeded,
    #[error("no route")]
    NoRoute,
    #[error("no SRH")]
    NoSrh,
    #[error("segments exhausted")]
    SegmentsExhausted,
    #[error("not at last segment")]
    NotLastSegment,
    #[error("no inner header")]
    NoInnerHeader,
    #[error("already segment-routed")]
    AlreadySegmentRouted,
    #[error("invalid SRH")]
    InvalidSrh,
    #[error("packet too large")]
    TooLarge,
    #[error("SRH invalid after program")]
    InvalidSrhAfterProgram,
    #[error("redirect without destination")]
    RedirectWithoutDestination,
    #[error("dropped by program")]
    ProgramDrop,
    #[error("egress link not attached")]
    LinkNotAttached,
}

impl From<SrError> for DropReason {
    fn from(e: SrError) -> Self {
        match e {
            SrError::NoSrh => DropReason::NoSrh,
            SrError::SegmentsExhausted => DropReason::SegmentsExhausted,
            SrError::NotLastSegment => DropReason::NotLastSegment,
            SrError::NoInnerHeader => DropReason::NoInnerHeader,
            SrError::AlreadySegmentRouted => DropReason::AlreadySegmentRouted,
            SrError::HopLimitExceeded => DropReason::HopLimitExceeded,
            SrError::Invalid(_) => DropReason::InvalidSrh,
            SrError::TooLarge => DropReason::TooLarge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardingDecision {
    Forward { link: LinkId, nexthop: Ipv6Addr },
    Drop(DropReason),
    LocalDeliver,
}

impl ForwardingDecision {
    fn forward(nh: Nexthop) -> Self {
        ForwardingDecision::Forward {
            link: nh.link,
            nexthop: nh.addr,
        }
    }
}

/// Routing state of a node. Written during setup, read-only while running.
#[derive(Debug, Clone)]
pub struct NodeTables {
    pub addresses: Vec<Ipv6Addr>,
    pub fib: Fib,
    pub local_sids: HashMap<Ipv6Addr, LocalBehavior>,
    pub transit: PrefixTable<TransitBehavior>,
    pub links: Vec<LinkId>,
    pub default_hop_limit: u8,
}

impl Default for NodeTables {
    fn default() -> Self {
        NodeTables {
            addresses: Vec::new(),
            fib: Fib::new(),
            local_sids: HashMap::new(),
            transit: PrefixTable::new(),
            links: Vec::new(),
            default_hop_limit: DEFAULT_HOP_LIMIT,
        }
    }
}

impl NodeTables {
    pub fn primary_address(&self) -> Ipv6Addr {
        self.addresses.first().copied().unwrap_or(Ipv6Addr::UNSPECIFIED)
    }

    pub fn is_local(&self, addr: Ipv6Addr) -> bool {
        self.addresses.contains(&addr)
    }

    pub fn fib_lookup(
        &self,
        addr: Ipv6Addr,
        table: TableId,
        flow: &FlowKey,
    ) -> Result<Nexthop, FibError> {
        self.fib.lookup(addr, table, flow)
    }

    /// Final forwarding step: the pending destination if one was set, local
    /// delivery for our own addresses, else a lookup in the pending table
    /// (main table by default).
    pub fn resolve(&self, p: &Packet) -> ForwardingDecision {
        if let Some(nh) = p.meta.pending_destination {
            return self.checked_forward(nh);
        }
        let dst = p.dst();
        if self.is_local(dst) {
            return ForwardingDecision::LocalDeliver;
        }
        let table = p.meta.pending_table.unwrap_or(TableId::MAIN);
        match self.fib.lookup(dst, table, &FlowKey::of(p)) {
            Ok(nh) => self.checked_forward(nh),
            Err(_) => ForwardingDecision::Drop(DropReason::NoRoute),
        }
    }

    fn checked_forward(&self, nh: Nexthop) -> ForwardingDecision {
        if self.links.contains(&nh.link) {
            ForwardingDecision::forward(nh)
        } else {
            ForwardingDecision::Drop(DropReason::LinkNotAttached)
        }
    }
}

/// A dataplane node: routing tables plus program runtime state.
#[derive(Debug)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub tables: NodeTables,
    pub maps: MapStore,
    pub events: EventQueue,
}

impl Node {
    pub fn new(id: NodeId, name: impl Into<String>, addresses: Vec<Ipv6Addr>) -> Self {
        Node {
            id,
            name: name.into(),
            tables: NodeTables {
                addresses,
                ..NodeTables::default()
            },
            maps: MapStore::new(),
            events: EventQueue::new(),
        }
    }

    pub fn fib_insert(&mut self, entry: FibEntry) {
        self.tables.fib.insert(entry);
    }

    pub fn fib_lookup(&self, addr: Ipv6Addr, table: TableId, flow: &FlowKey) -> Result<Nexthop, FibError> {
        self.tables.fib.lookup(addr, table, flow)
    }

    pub fn fib_ecmp_list(&self, addr: Ipv6Addr, table: TableId) -> Result<&[Nexthop], FibError> {
        self.tables.fib.ecmp_list(addr, table)
    }

    /// Binds a SID, declaring the maps of an attached program.
    pub fn add_local_sid(&mut self, sid: Ipv6Addr, behavior: LocalBehavior) -> Result<(), program::MapError> {
        if let LocalBehavior::EndBpf(prog) = &behavior {
            self.declare_maps(prog)?;
        }
        self.tables.local_sids.insert(sid, behavior);
        Ok(())
    }

    pub fn add_transit(&mut self, prefix: Prefix, behavior: TransitBehavior) -> Result<(), program::MapError> {
        if let TransitBehavior::Program(prog) = &behavior {
            self.declare_maps(prog)?;
        }
        self.tables.transit.insert(prefix, behavior);
        Ok(())
    }

    pub fn attach_link(&mut self, link: LinkId) {
        if !self.tables.links.contains(&link) {
            self.tables.links.push(link);
        }
    }

    fn declare_maps(&mut self, prog: &ProgramRef) -> Result<(), program::MapError> {
        for spec in prog.maps() {
            self.maps.declare(spec)?;
        }
        Ok(())
    }
}

/// Outcome of running a packet through a node.
#[derive(Debug)]
pub struct Processed {
    pub decision: ForwardingDecision,
    pub packet: Packet,
    /// Control packets created by the node (ICMPv6 errors), to be
    /// originated at the same node.
    pub generated: Vec<Packet>,
}

fn reset_meta(node: &Node, p: &mut Packet, now: u64) {
    p.meta.rx_timestamp_ns = now;
    p.meta.ingress_node = Some(node.id);
    p.meta.pending_destination = None;
    p.meta.pending_table = None;
    p.meta.srh_dirty = false;
}

/// Receive pipeline for a packet arriving at `node` at time `now`.
pub fn process_ingress(node: &mut Node, mut packet: Packet, now: u64) -> Processed {
    reset_meta(node, &mut packet, now);
    let mut generated = Vec::new();
    let dst = packet.dst();

    if node.tables.is_local(dst) && !node.tables.local_sids.contains_key(&dst) {
        deliver_locally(node, &packet, &mut generated);
        return Processed {
            decision: ForwardingDecision::LocalDeliver,
            packet,
            generated,
        };
    }

    if packet.outer().hop_limit <= 1 {
        generated.extend(icmp::time_exceeded(node.tables.primary_address(), &packet));
        return Processed {
            decision: ForwardingDecision::Drop(DropReason::HopLimitExceeded),
            packet,
            generated,
        };
    }
    packet.outer_mut().hop_limit -= 1;

    let decision = if let Some(behavior) = node.tables.local_sids.get(&dst).cloned() {
        dispatch_local(node, behavior, &mut packet, now)
    } else {
        transit_then_resolve(node, &mut packet, now)
    };
    if decision == ForwardingDecision::LocalDeliver {
        deliver_locally(node, &packet, &mut generated);
    }
    Processed {
        decision,
        packet,
        generated,
    }
}

/// Pipeline for a packet generated by `node` itself: no hop limit
/// decrement and no SID dispatch, but transit behaviors still apply.
pub fn originate(node: &mut Node, mut packet: Packet, now: u64) -> Processed {
    reset_meta(node, &mut packet, now);
    let decision = if node.tables.is_local(packet.dst()) {
        ForwardingDecision::LocalDeliver
    } else {
        transit_then_resolve(node, &mut packet, now)
    };
    Processed {
        decision,
        packet,
        generated: Vec::new(),
    }
}

fn deliver_locally(node: &Node, packet: &Packet, generated: &mut Vec<Packet>) {
    if let Some(udp) = packet.udp_datagram() {
        if TRACEROUTE_PORTS.contains(&udp.dst_port) {
            generated.extend(icmp::port_unreachable(node.tables.primary_address(), packet));
        }
    }
}

fn dispatch_local(node: &mut Node, behavior: LocalBehavior, p: &mut Packet, now: u64) -> ForwardingDecision {
    let src = node.tables.primary_address();
    let hop_limit = node.tables.default_hop_limit;
    let applied = match &behavior {
        LocalBehavior::End => behavior::end(p),
        LocalBehavior::EndX(nh) => behavior::end_x(p, *nh),
        LocalBehavior::EndT(t) => behavior::end_t(p, *t),
        LocalBehavior::EndB6(srh) => behavior::end_b6(p, srh),
        LocalBehavior::EndB6Encaps { srh, src: s } => {
            behavior::end_b6_encaps(p, srh, s.unwrap_or(src), hop_limit)
        }
        LocalBehavior::EndDT6(t) => behavior::end_dt6(p, *t),
        LocalBehavior::EndBpf(prog) => return program::run_endpoint_program(node, prog, p, now),
    };
    match applied {
        Ok(()) => node.tables.resolve(p),
        Err(e) => ForwardingDecision::Drop(e.into()),
    }
}

fn transit_then_resolve(node: &mut Node, p: &mut Packet, now: u64) -> ForwardingDecision {
    let behavior = node.tables.transit.lookup(p.dst()).map(|(_, b)| b.clone());
    let src = node.tables.primary_address();
    let hop_limit = node.tables.default_hop_limit;
    let applied = match behavior {
        None => Ok(()),
        Some(TransitBehavior::Insert(srh)) => behavior::t_insert(p, &srh),
        Some(TransitBehavior::Encaps { srh, src: s }) => {
            behavior::t_encaps(p, &srh, s.unwrap_or(src), hop_limit)
        }
        Some(TransitBehavior::Program(prog)) => {
            return program::run_transit_program(node, &prog, p, now)
        }
    };
    match applied {
        Ok(()) => node.tables.resolve(p),
        Err(e) => ForwardingDecision::Drop(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{Ipv6Header, Layer, Transport, UdpDatagram};

    fn a(n: u16) -> Ipv6Addr {
        Ipv6Addr::new(0xfc00, 0, 0, 0, 0, 0, 0, n)
    }

    fn router() -> Node {
        let mut n = Node::new(NodeId(1), "R", vec![a(1)]);
        n.attach_link(LinkId(1));
        n.attach_link(LinkId(2));
        n.attach_link(LinkId(3));
        n.fib_insert(FibEntry::new("::/0".parse().unwrap(), vec![Nexthop::new(a(50), LinkId(1))], TableId::MAIN).unwrap());
        n.fib_insert(
            FibEntry::new(
                "fc00::2/128".parse().unwrap(),
                vec![Nexthop::new(a(2), LinkId(2)), Nexthop::new(a(3), LinkId(3))],
                TableId::MAIN,
            )
            .unwrap(),
        );
        n
    }

    fn sr_packet(sid: Ipv6Addr, hop_limit: u8) -> Packet {
        let srh = SegmentRoutingHeader::from_path(&[sid, a(2)]);
        Packet::new(
            vec![Layer::with_srh(Ipv6Header::new(a(9), sid, hop_limit), srh)],
            Transport::Udp(UdpDatagram::new(1, 2, vec![0; 64])),
        )
    }

    #[test]
    fn end_sid_advances_and_forwards() {
        let mut n = router();
        n.add_local_sid(a(100), LocalBehavior::End).unwrap();
        let out = process_ingress(&mut n, sr_packet(a(100), 64), 5);
        assert!(matches!(out.decision, ForwardingDecision::Forward { .. }));
        assert_eq!(out.packet.dst(), a(2));
        assert_eq!(out.packet.outer().hop_limit, 63);
        assert_eq!(out.packet.meta.rx_timestamp_ns, 5);
    }

    #[test]
    fn plain_forward() {
        let mut n = router();
        let p = Packet::udp(a(9), a(77), 1, 2, vec![]);
        let out = process_ingress(&mut n, p, 0);
        assert_eq!(
            out.decision,
            ForwardingDecision::Forward {
                link: LinkId(1),
                nexthop: a(50)
            }
        );
    }

    #[test]
    fn hop_limit_one_generates_time_exceeded() {
        let mut n = router();
        let p = Packet::udp(a(9), a(77), 1, 2, vec![]);
        let mut p1 = p.clone();
        p1.outer_mut().hop_limit = 1;
        let out = process_ingress(&mut n, p1, 0);
        assert_eq!(out.decision, ForwardingDecision::Drop(DropReason::HopLimitExceeded));
        assert_eq!(out.generated.len(), 1);
        let e = icmp::parse_error(&out.generated[0]).unwrap();
        assert_eq!(e.icmp_type, icmp::ICMP_TIME_EXCEEDED);
        assert_eq!(e.responder, a(1));
        assert_eq!(out.generated[0].dst(), a(9));
    }

    #[test]
    fn end_x_bypasses_ecmp() {
        let mut n = router();
        let pinned = Nexthop::new(a(3), LinkId(3));
        n.add_local_sid(a(100), LocalBehavior::EndX(pinned)).unwrap();
        for label in 0..64 {
            let mut p = sr_packet(a(100), 64);
            p.outer_mut().flow_label = label;
            let out = process_ingress(&mut n, p, 0);
            assert_eq!(
                out.decision,
                ForwardingDecision::Forward {
                    link: LinkId(3),
                    nexthop: a(3)
                }
            );
        }
    }

    #[test]
    fn end_t_uses_bound_table_without_fallback() {
        let mut n = router();
        n.add_local_sid(a(100), LocalBehavior::EndT(TableId(100))).unwrap();
        let out = process_ingress(&mut n, sr_packet(a(100), 64), 0);
        assert_eq!(out.decision, ForwardingDecision::Drop(DropReason::NoRoute));

        n.fib_insert(
            FibEntry::new("fc00::2/128".parse().unwrap(), vec![Nexthop::new(a(60), LinkId(1))], TableId(100)).unwrap(),
        );
        let out = process_ingress(&mut n, sr_packet(a(100), 64), 0);
        assert_eq!(
            out.decision,
            ForwardingDecision::Forward {
                link: LinkId(1),
                nexthop: a(60)
            }
        );
    }

    #[test]
    fn local_address_is_delivered() {
        let mut n = router();
        let p = Packet::udp(a(9), a(1), 1, 2, vec![]);
        let out = process_ingress(&mut n, p, 0);
        assert_eq!(out.decision, ForwardingDecision::LocalDeliver);
        assert!(out.generated.is_empty());
        let p = Packet::udp(a(9), a(1), 1, 33434, vec![]);
        let out = process_ingress(&mut n, p, 0);
        assert_eq!(out.generated.len(), 1);
    }

    #[test]
    fn transit_insert_applies_to_matching_prefix() {
        let mut n = router();
        n.add_transit(
            Prefix::host(a(77)),
            TransitBehavior::Insert(SegmentRoutingHeader::new(vec![a(2)], 0)),
        )
        .unwrap();
        let out = process_ingress(&mut n, Packet::udp(a(9), a(77), 1, 2, vec![]), 0);
        assert!(matches!(out.decision, ForwardingDecision::Forward { .. }));
        assert_eq!(out.packet.dst(), a(2));
        assert_eq!(out.packet.outer_srh().unwrap().segments, vec![a(77), a(2)]);
    }

    #[test]
    fn unattached_link_is_dropped() {
        let mut n = router();
        n.add_local_sid(a(100), LocalBehavior::EndX(Nexthop::new(a(3), LinkId(42)))).unwrap();
        let out = process_ingress(&mut n, sr_packet(a(100), 64), 0);
        assert_eq!(out.decision, ForwardingDecision::Drop(DropReason::LinkNotAttached));
    }
}
