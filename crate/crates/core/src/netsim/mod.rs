//! Deterministic discrete-event network simulator.
//!
//! Events run in (time, insertion sequence) order on one thread. Links
//! model serialization, Gaussian jitter from a per-link seeded stream and
//! an adjustable extra egress delay. Identical configuration and seed give
//! identical traces.

mod generator;
mod link;
pub mod rng;
pub mod trace;

use std::any::Any;
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::io;
use std::net::Ipv6Addr;

use thiserror::Error;

use crate::ids::{LinkId, NodeId};
use crate::packet::Packet;
use crate::srv6::{self, DropReason, ForwardingDecision, Node, Processed};

pub use generator::UdpStream;
pub use link::{Link, LinkParams};
pub use rng::SimRng;
pub use trace::{
    goodput_estimate, reorder_fraction, stream_ids, stream_payload, write_tsv, Direction, MetricError, TraceMode,
    TraceRecord,
};

pub const NS_PER_MS: u64 = 1_000_000;
pub const NS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("link {link} is not attached to node {node}")]
    UnknownLink { node: NodeId, link: LinkId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DaemonId(pub usize);

/// Userspace process attached to the simulation. Daemons run between
/// packet events and act through the [`Simulation`] API.
pub trait Daemon: Send {
    fn name(&self) -> &str;

    /// Periodic timer. Returns the next tick time, if any.
    fn tick(&mut self, _sim: &mut Simulation) -> Option<u64> {
        None
    }

    /// Called when the subscribed node emitted an event or captured a
    /// packet.
    fn wake(&mut self, _sim: &mut Simulation) {}

    fn as_any(&self) -> &dyn Any;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub received: u64,
    pub forwarded: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub originated: u64,
    pub drop_reasons: BTreeMap<DropReason, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub now_ns: u64,
    pub nodes: Vec<NodeStats>,
    pub events_emitted: u64,
    pub events_dropped: u64,
}

impl Stats {
    fn sum(&self, f: impl Fn(&NodeStats) -> u64) -> u64 {
        self.nodes.iter().map(f).sum()
    }

    pub fn originated(&self) -> u64 {
        self.sum(|n| n.originated)
    }

    pub fn delivered(&self) -> u64 {
        self.sum(|n| n.delivered)
    }

    pub fn dropped(&self) -> u64 {
        self.sum(|n| n.dropped)
    }

    pub fn forwarded(&self) -> u64 {
        self.sum(|n| n.forwarded)
    }
}

/// Packet delivered locally at a node with capture enabled.
#[derive(Debug, Clone)]
pub struct Captured {
    pub time_ns: u64,
    pub packet: Packet,
}

#[derive(Debug)]
enum EventKind {
    Deliver { to: NodeId, packet: Packet },
    Inject { node: NodeId, packet: Packet },
    Generate(usize),
    Tick(DaemonId),
    Wake(DaemonId),
}

#[derive(Debug)]
struct Scheduled {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct DaemonSlot {
    daemon: Option<Box<dyn Daemon>>,
    node: Option<NodeId>,
    wake_pending: bool,
}

pub struct Simulation {
    seed: u64,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    nodes: Vec<Node>,
    links: Vec<Link>,
    stats: Vec<NodeStats>,
    trace_mode: TraceMode,
    trace: Vec<TraceRecord>,
    generators: Vec<UdpStream>,
    daemons: Vec<DaemonSlot>,
    subscribers: Vec<Option<DaemonId>>,
    capture: Vec<bool>,
    inboxes: Vec<Vec<Captured>>,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("seed", &self.seed)
            .field("now", &self.now)
            .field("nodes", &self.nodes.len())
            .field("links", &self.links.len())
            .field("pending_events", &self.queue.len())
            .finish()
    }
}

impl Simulation {
    pub fn new(seed: u64) -> Self {
        Simulation {
            seed,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes: Vec::new(),
            links: Vec::new(),
            stats: Vec::new(),
            trace_mode: TraceMode::All,
            trace: Vec::new(),
            generators: Vec::new(),
            daemons: Vec::new(),
            subscribers: Vec::new(),
            capture: Vec::new(),
            inboxes: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn add_node(&mut self, name: impl Into<String>, addresses: Vec<Ipv6Addr>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node::new(id, name, addresses));
        self.stats.push(NodeStats::default());
        self.subscribers.push(None);
        self.capture.push(false);
        self.inboxes.push(Vec::new());
        id
    }

    /// Connects two nodes. Jitter comes from the link's own random stream.
    pub fn add_link(&mut self, a: NodeId, b: NodeId, params: LinkParams) -> Result<LinkId, SimError> {
        for n in [a, b] {
            self.check_node(n)?;
        }
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link::new(a, b, params, SimRng::stream(self.seed, u64::from(id.0))));
        self.nodes[a.0 as usize].attach_link(id);
        self.nodes[b.0 as usize].attach_link(id);
        Ok(id)
    }

    fn check_node(&self, n: NodeId) -> Result<(), SimError> {
        if (n.0 as usize) < self.nodes.len() {
            Ok(())
        } else {
            Err(SimError::UnknownNode(n))
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.0 as usize]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    /// Node owning `addr` as an interface address.
    pub fn node_by_address(&self, addr: Ipv6Addr) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.tables.is_local(addr)).map(|n| n.id)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }

    pub fn links_between(&self, a: NodeId, b: NodeId) -> Vec<LinkId> {
        (0..self.links.len())
            .filter(|&i| {
                let e = self.links[i].endpoints;
                e == (a, b) || e == (b, a)
            })
            .map(|i| LinkId(i as u32))
            .collect()
    }

    /// Extra egress delay on `link` for packets sent by `node`.
    pub fn set_qdisc_delay(&mut self, node: NodeId, link: LinkId, delay_ns: u64) -> Result<(), SimError> {
        let l = self
            .links
            .get_mut(link.0 as usize)
            .ok_or(SimError::UnknownLink { node, link })?;
        if l.set_qdisc_delay(node, delay_ns) {
            Ok(())
        } else {
            Err(SimError::UnknownLink { node, link })
        }
    }

    pub fn qdisc_delay(&self, node: NodeId, link: LinkId) -> Option<u64> {
        self.links.get(link.0 as usize)?.qdisc_delay(node)
    }

    pub fn set_trace_mode(&mut self, mode: TraceMode) {
        self.trace_mode = mode;
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn write_trace<W: io::Write>(&self, w: W) -> io::Result<()> {
        write_tsv(w, &self.trace, &self.node_names())
    }

    /// Keep locally delivered packets at `node` for [`Simulation::take_inbox`].
    pub fn enable_capture(&mut self, node: NodeId) {
        self.capture[node.0 as usize] = true;
    }

    pub fn take_inbox(&mut self, node: NodeId) -> Vec<Captured> {
        std::mem::take(&mut self.inboxes[node.0 as usize])
    }

    fn schedule(&mut self, time: u64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, kind }));
    }

    /// Originates `packet` at `node` at time `at` (not before now).
    pub fn inject(&mut self, node: NodeId, packet: Packet, at: u64) {
        self.schedule(at.max(self.now), EventKind::Inject { node, packet });
    }

    pub fn add_generator(&mut self, stream: UdpStream) -> usize {
        let idx = self.generators.len();
        if stream.count > 0 {
            self.schedule(stream.send_time(0).max(self.now), EventKind::Generate(idx));
        }
        self.generators.push(stream);
        idx
    }

    pub fn generators(&self) -> &[UdpStream] {
        &self.generators
    }

    /// Registers a daemon. `node` subscribes it to that node's events and
    /// captured packets; `first_tick` starts its timer.
    pub fn add_daemon(&mut self, daemon: Box<dyn Daemon>, node: Option<NodeId>, first_tick: Option<u64>) -> DaemonId {
        let id = DaemonId(self.daemons.len());
        self.daemons.push(DaemonSlot {
            daemon: Some(daemon),
            node,
            wake_pending: false,
        });
        if let Some(n) = node {
            self.subscribers[n.0 as usize] = Some(id);
            self.capture[n.0 as usize] = true;
        }
        if let Some(t) = first_tick {
            self.schedule(t.max(self.now), EventKind::Tick(id));
        }
        id
    }

    pub fn daemon<T: 'static>(&self, id: DaemonId) -> Option<&T> {
        self.daemons.get(id.0)?.daemon.as_ref()?.as_any().downcast_ref()
    }

    pub fn daemon_ids(&self) -> impl Iterator<Item = (DaemonId, Option<NodeId>)> + '_ {
        self.daemons.iter().enumerate().map(|(i, d)| (DaemonId(i), d.node))
    }

    pub fn stats(&self) -> Stats {
        Stats {
            now_ns: self.now,
            nodes: self.stats.clone(),
            events_emitted: self.nodes.iter().map(|n| n.events.emitted()).sum(),
            events_dropped: self.nodes.iter().map(|n| n.events.dropped()).sum(),
        }
    }

    pub fn node_stats(&self, id: NodeId) -> &NodeStats {
        &self.stats[id.0 as usize]
    }

    /// Runs every event scheduled at or before `t_ns`, then sets the clock
    /// to `t_ns`.
    pub fn run_until(&mut self, t_ns: u64) -> Stats {
        while let Some(Reverse(ev)) = self.queue.peek() {
            if ev.time > t_ns {
                break;
            }
            let Some(Reverse(ev)) = self.queue.pop() else { break };
            self.now = ev.time;
            self.dispatch(ev.kind);
        }
        self.now = self.now.max(t_ns);
        self.stats()
    }

    /// Runs until no events remain.
    pub fn run_to_completion(&mut self) -> Stats {
        self.run_until(u64::MAX);
        self.stats()
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::Deliver { to, packet } => {
                self.record(to, Direction::Ingress, &packet);
                self.stats[to.0 as usize].received += 1;
                let out = srv6::process_ingress(&mut self.nodes[to.0 as usize], packet, self.now);
                self.handle(to, out);
            }
            EventKind::Inject { node, packet } => self.originate(node, packet),
            EventKind::Generate(idx) => {
                let g = &mut self.generators[idx];
                let node = g.node;
                if let Some(p) = g.next_packet() {
                    let sent = g.sent();
                    let more = (sent < g.count).then(|| g.send_time(sent));
                    self.originate(node, p);
                    if let Some(t) = more {
                        self.schedule(t, EventKind::Generate(idx));
                    }
                }
            }
            EventKind::Tick(id) => {
                if let Some(mut d) = self.daemons[id.0].daemon.take() {
                    let next = d.tick(self);
                    self.daemons[id.0].daemon = Some(d);
                    if let Some(t) = next {
                        self.schedule(t.max(self.now), EventKind::Tick(id));
                    }
                }
            }
            EventKind::Wake(id) => {
                self.daemons[id.0].wake_pending = false;
                if let Some(mut d) = self.daemons[id.0].daemon.take() {
                    d.wake(self);
                    self.daemons[id.0].daemon = Some(d);
                }
            }
        }
    }

    fn originate(&mut self, node: NodeId, packet: Packet) {
        self.stats[node.0 as usize].originated += 1;
        let out = srv6::originate(&mut self.nodes[node.0 as usize], packet, self.now);
        self.handle(node, out);
    }

    fn handle(&mut self, node: NodeId, out: Processed) {
        let Processed {
            decision,
            packet,
            generated,
        } = out;
        let idx = node.0 as usize;
        match decision {
            ForwardingDecision::Forward { link, .. } => {
                self.record(node, Direction::Egress, &packet);
                self.stats[idx].forwarded += 1;
                let size = packet.encoded_len();
                let l = &mut self.links[link.0 as usize];
                if let Some((to, at)) = l.transmit(node, size, self.now) {
                    self.schedule(at, EventKind::Deliver { to, packet });
                }
            }
            ForwardingDecision::Drop(reason) => {
                log::debug!("{} drops packet: {reason}", self.nodes[idx].name);
                self.record(node, Direction::Drop, &packet);
                let s = &mut self.stats[idx];
                s.dropped += 1;
                *s.drop_reasons.entry(reason).or_default() += 1;
            }
            ForwardingDecision::LocalDeliver => {
                self.stats[idx].delivered += 1;
                if self.capture[idx] {
                    self.inboxes[idx].push(Captured {
                        time_ns: self.now,
                        packet,
                    });
                }
            }
        }
        for g in generated {
            self.inject(node, g, self.now);
        }
        if let Some(d) = self.subscribers[idx] {
            let has_work = !self.nodes[idx].events.is_empty() || !self.inboxes[idx].is_empty();
            if has_work && !self.daemons[d.0].wake_pending {
                self.daemons[d.0].wake_pending = true;
                self.schedule(self.now, EventKind::Wake(d));
            }
        }
    }

    fn record(&mut self, node: NodeId, direction: Direction, packet: &Packet) {
        if !self.trace_mode.includes(node) {
            return;
        }
        let ids = stream_ids(packet);
        self.trace.push(TraceRecord {
            time_ns: self.now,
            node,
            direction,
            flow: ids.map(|i| i.0),
            seq: ids.map(|i| i.1),
            size: packet.encoded_len() as u32,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{Nexthop, TableId};
    use crate::srv6::FibEntry;

    fn a(n: u16) -> Ipv6Addr {
        Ipv6Addr::new(0xfc00, 0, 0, 0, 0, 0, 0, n)
    }

    fn chain(seed: u64, stddev: u64) -> (Simulation, NodeId, NodeId) {
        let mut sim = Simulation::new(seed);
        let s = sim.add_node("S", vec![a(1)]);
        let d = sim.add_node("D", vec![a(2)]);
        let l = sim
            .add_link(
                s,
                d,
                LinkParams {
                    bandwidth_bps: 50_000_000,
                    delay_mean_ns: 15 * NS_PER_MS,
                    delay_stddev_ns: stddev,
                },
            )
            .unwrap();
        sim.node_mut(s)
            .fib_insert(FibEntry::new("::/0".parse().unwrap(), vec![Nexthop::new(a(2), l)], TableId::MAIN).unwrap());
        sim.node_mut(d)
            .fib_insert(FibEntry::new("::/0".parse().unwrap(), vec![Nexthop::new(a(1), l)], TableId::MAIN).unwrap());
        (sim, s, d)
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut sim = Simulation::new(0);
        let st = sim.run_until(5_000);
        assert_eq!(st.now_ns, 5_000);
        assert_eq!(sim.now(), 5_000);
    }

    #[test]
    fn injected_packet_arrives_after_delay() {
        let (mut sim, s, d) = chain(1, 0);
        let p = Packet::udp(a(1), a(2), 1, 2, stream_payload(0, 0, 64));
        let size = p.encoded_len();
        sim.inject(s, p, 1_000);
        sim.run_until(NS_PER_SEC);
        let ingress: Vec<_> = sim.trace().iter().filter(|r| r.direction == Direction::Ingress).collect();
        assert_eq!(ingress.len(), 1);
        assert_eq!(ingress[0].node, d);
        let ser = (size as u64 * 8 * NS_PER_SEC).div_ceil(50_000_000);
        assert_eq!(ingress[0].time_ns, 1_000 + ser + 15 * NS_PER_MS);
        assert_eq!(sim.node_stats(d).delivered, 1);
    }

    #[test]
    fn stream_timing_and_order() {
        let (mut sim, s, d) = chain(1, 0);
        sim.add_generator(UdpStream::new(s, a(1), a(2), 1000, 64, 100));
        let st = sim.run_until(NS_PER_SEC);
        let egress: Vec<_> = sim.trace().iter().filter(|r| r.direction == Direction::Egress).collect();
        assert_eq!(egress.len(), 100);
        for (i, r) in egress.iter().enumerate() {
            assert_eq!(r.time_ns, i as u64 * NS_PER_MS);
            assert_eq!(r.seq, Some(i as u32));
        }
        assert_eq!(st.originated(), st.delivered() + st.dropped());
        assert_eq!(reorder_fraction(sim.trace(), 0, d), Ok(0.0));
    }

    #[test]
    fn same_seed_same_trace() {
        let run = |seed| {
            let (mut sim, s, _) = chain(seed, 2_500_000);
            sim.add_generator(UdpStream::new(s, a(1), a(2), 1000, 1200, 500));
            sim.run_until(10 * NS_PER_SEC);
            let mut out = Vec::new();
            sim.write_trace(&mut out).unwrap();
            out
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn fifo_and_monotone_clock_under_jitter() {
        let (mut sim, s, d) = chain(9, 2_500_000);
        sim.add_generator(UdpStream::new(s, a(1), a(2), 1000, 1200, 2000));
        sim.run_until(10 * NS_PER_SEC);
        assert!(sim.trace().windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
        assert_eq!(reorder_fraction(sim.trace(), 0, d), Ok(0.0));
    }

    #[test]
    fn qdisc_on_foreign_link_is_rejected() {
        let (mut sim, s, _) = chain(1, 0);
        assert!(sim.set_qdisc_delay(s, LinkId(0), 12_500_000).is_ok());
        assert_eq!(sim.qdisc_delay(s, LinkId(0)), Some(12_500_000));
        assert_eq!(
            sim.set_qdisc_delay(s, LinkId(5), 1),
            Err(SimError::UnknownLink {
                node: s,
                link: LinkId(5)
            })
        );
    }

    #[test]
    fn unrouted_packet_is_dropped_and_counted() {
        let mut sim = Simulation::new(0);
        let s = sim.add_node("S", vec![a(1)]);
        sim.inject(s, Packet::udp(a(1), a(9), 1, 2, vec![]), 0);
        let st = sim.run_until(1);
        assert_eq!(st.nodes[0].drop_reasons.get(&DropReason::NoRoute), Some(&1));
        assert_eq!(st.originated(), st.delivered() + st.dropped());
    }
}
