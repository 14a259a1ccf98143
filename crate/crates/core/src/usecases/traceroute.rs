//! Multipath traceroute: asks End.OAMP-capable hops for their ECMP
//! nexthops and falls back to hop-limited probes with fixed flow keys
//! elsewhere.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::net::Ipv6Addr;

use crate::ids::{NodeId, TableId};
use crate::netsim::{Simulation, NS_PER_MS, NS_PER_SEC};
use crate::packet::tlv::encode_padded;
use crate::packet::{Ipv6Header, Layer, Packet, SegmentRoutingHeader, Transport, UdpDatagram};
use crate::srv6::icmp;

use super::oamp::OampReply;
use super::tlvs::{controller_tlv, Controller};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracerouteOptions {
    /// Flow labels used for hop-limited probing; one fixed flow key each.
    pub flow_labels: Vec<u32>,
    pub timeout_ns: u64,
    pub max_depth: u8,
    pub src_port: u16,
    pub dst_port: u16,
    pub oamp_port: u16,
}

impl Default for TracerouteOptions {
    fn default() -> Self {
        TracerouteOptions {
            flow_labels: (0..32).collect(),
            timeout_ns: 3 * NS_PER_SEC,
            max_depth: 30,
            src_port: 33000,
            dst_port: 33434,
            oamp_port: 50000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopMethod {
    Source,
    Oamp,
    Icmp,
    Target,
    /// Probes timed out.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopEntry {
    pub addr: Ipv6Addr,
    pub depth: u8,
    pub method: HopMethod,
    pub nexthops: BTreeSet<Ipv6Addr>,
    /// The hop answered but has no route to the target.
    pub no_route: bool,
    /// Some probes for this hop's nexthops went unanswered.
    pub timeouts: u32,
    pub probes: u32,
}

impl HopEntry {
    fn new(addr: Ipv6Addr, depth: u8, method: HopMethod) -> Self {
        HopEntry {
            addr,
            depth,
            method,
            nexthops: BTreeSet::new(),
            no_route: false,
            timeouts: 0,
            probes: 0,
        }
    }
}

/// Discovered hops in breadth-first order, each with its nexthop set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopGraph {
    pub source: Ipv6Addr,
    pub target: Ipv6Addr,
    pub hops: Vec<HopEntry>,
    pub reached: bool,
}

impl HopGraph {
    pub fn hop(&self, addr: Ipv6Addr) -> Option<&HopEntry> {
        self.hops.iter().find(|h| h.addr == addr)
    }

    pub fn total_probes(&self) -> u32 {
        self.hops.iter().map(|h| h.probes).sum()
    }

    /// One line per hop: depth, address, optional node name, method and
    /// nexthops.
    pub fn render(&self, name_of: impl Fn(Ipv6Addr) -> Option<String>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "traceroute from {} to {}", self.source, self.target);
        for h in &self.hops {
            let name = name_of(h.addr).map(|n| format!(" ({n})")).unwrap_or_default();
            let method = match h.method {
                HopMethod::Source => "source",
                HopMethod::Oamp => "oamp",
                HopMethod::Icmp => "icmp",
                HopMethod::Target => "target",
                HopMethod::Unknown => "*",
            };
            let _ = write!(out, "{:>2}  {}{}  [{}]", h.depth, h.addr, name, method);
            if !h.nexthops.is_empty() {
                let list: Vec<String> = h.nexthops.iter().map(|a| a.to_string()).collect();
                let _ = write!(out, " -> {}", list.join(", "));
            }
            if h.no_route {
                out.push_str(" no route");
            }
            if h.timeouts > 0 {
                let _ = write!(out, " ({} probes timed out)", h.timeouts);
            }
            out.push('\n');
        }
        if !self.reached {
            out.push_str("target not reached\n");
        }
        out
    }
}

enum Answer {
    Responder(Ipv6Addr),
    Nexthops(OampReply),
}

struct Prober<'a> {
    sim: &'a mut Simulation,
    src: NodeId,
    src_addr: Ipv6Addr,
    target: Ipv6Addr,
    opts: &'a TracerouteOptions,
    cache: HashMap<(u32, u8), Option<Ipv6Addr>>,
    probes: u32,
}

impl Prober<'_> {
    /// Injects `p` and runs the simulation until an answer arrives or the
    /// timeout expires.
    fn ask(&mut self, p: Packet, want_oamp: bool) -> Option<Answer> {
        self.probes += 1;
        self.sim.take_inbox(self.src);
        let start = self.sim.now();
        self.sim.inject(self.src, p, start);
        let step = NS_PER_MS;
        let mut t = start;
        while t < start + self.opts.timeout_ns {
            t = (t + step).min(start + self.opts.timeout_ns);
            self.sim.run_until(t);
            for c in self.sim.take_inbox(self.src) {
                if want_oamp {
                    if let Some(udp) = c.packet.udp_datagram() {
                        if udp.dst_port == self.opts.oamp_port {
                            if let Some((reply, _)) = OampReply::parse(&udp.payload) {
                                return Some(Answer::Nexthops(reply));
                            }
                        }
                    }
                } else if let Some(e) = icmp::parse_error(&c.packet) {
                    return Some(Answer::Responder(e.responder));
                }
            }
        }
        None
    }

    fn responder(&mut self, label: u32, hop_limit: u8) -> Option<Ipv6Addr> {
        if let Some(r) = self.cache.get(&(label, hop_limit)) {
            return *r;
        }
        let mut p = Packet::udp(self.src_addr, self.target, self.opts.src_port, self.opts.dst_port, vec![0; 32]);
        p.outer_mut().flow_label = label & 0xf_ffff;
        p.outer_mut().hop_limit = hop_limit;
        let r = match self.ask(p, false) {
            Some(Answer::Responder(a)) => Some(a),
            _ => None,
        };
        self.cache.insert((label, hop_limit), r);
        r
    }

    fn oamp(&mut self, sid: Ipv6Addr) -> Option<OampReply> {
        let srh = SegmentRoutingHeader::from_path(&[sid, self.target])
            .with_tlvs(encode_padded(&[controller_tlv(Controller::new(self.src_addr, self.opts.oamp_port))]));
        let p = Packet::new(
            vec![Layer::with_srh(Ipv6Header::new(self.src_addr, sid, 64), srh)],
            Transport::Udp(UdpDatagram::new(self.opts.oamp_port, self.opts.oamp_port, vec![0; 8])),
        );
        match self.ask(p, true) {
            Some(Answer::Nexthops(r)) => Some(r),
            _ => None,
        }
    }
}

/// Breadth-first exploration from `src` towards `target`. `oamp_sids`
/// maps a hop address to the End.OAMP SID it serves.
pub fn multipath_traceroute(
    sim: &mut Simulation,
    src: NodeId,
    target: Ipv6Addr,
    oamp_sids: &HashMap<Ipv6Addr, Ipv6Addr>,
    opts: &TracerouteOptions,
) -> HopGraph {
    sim.enable_capture(src);
    let src_addr = sim.node(src).tables.primary_address();
    let mut graph = HopGraph {
        source: src_addr,
        target,
        hops: vec![HopEntry::new(src_addr, 0, HopMethod::Source)],
        reached: false,
    };
    let first: Vec<Ipv6Addr> = match sim.node(src).fib_ecmp_list(target, TableId::MAIN) {
        Ok(list) => list.iter().map(|n| n.addr).collect(),
        Err(_) => {
            graph.hops[0].no_route = true;
            return graph;
        }
    };
    graph.hops[0].nexthops.extend(first.iter().copied());

    let mut prober = Prober {
        sim,
        src,
        src_addr,
        target,
        opts,
        cache: HashMap::new(),
        probes: 0,
    };
    let mut seen: BTreeSet<Ipv6Addr> = [src_addr].into();
    let mut queue: VecDeque<(Ipv6Addr, u8)> = VecDeque::new();
    for a in first {
        if seen.insert(a) {
            queue.push_back((a, 1));
        }
    }

    while let Some((addr, depth)) = queue.pop_front() {
        if addr == target {
            graph.reached = true;
            graph.hops.push(HopEntry::new(addr, depth, HopMethod::Target));
            continue;
        }
        let before = prober.probes;
        let mut entry = match oamp_sids.get(&addr) {
            Some(&sid) => {
                let mut e = HopEntry::new(addr, depth, HopMethod::Oamp);
                match prober.oamp(sid) {
                    Some(reply) if reply.nexthops.is_empty() => e.no_route = true,
                    Some(reply) => e.nexthops.extend(reply.nexthops),
                    None => {
                        e.method = HopMethod::Unknown;
                        e.timeouts += 1;
                    }
                }
                e
            }
            None => {
                let mut e = HopEntry::new(addr, depth, HopMethod::Icmp);
                if depth < opts.max_depth {
                    for &label in &opts.flow_labels {
                        if prober.responder(label, depth) != Some(addr) {
                            continue;
                        }
                        match prober.responder(label, depth + 1) {
                            Some(next) => {
                                e.nexthops.insert(next);
                            }
                            None => e.timeouts += 1,
                        }
                    }
                }
                if e.nexthops.is_empty() && e.timeouts > 0 {
                    e.method = HopMethod::Unknown;
                }
                e
            }
        };
        entry.probes = prober.probes - before;
        if depth < opts.max_depth {
            for &n in &entry.nexthops {
                if seen.insert(n) {
                    queue.push_back((n, depth + 1));
                }
            }
        }
        graph.hops.push(entry);
    }
    graph
}
