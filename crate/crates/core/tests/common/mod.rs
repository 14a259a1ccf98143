//! Seeded generators shared by the integration suites.

#![allow(dead_code)]

use std::net::Ipv6Addr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srv6sim::packet::tlv::{pad_to_8, Tlv};
use srv6sim::packet::{encode_packet, Ipv6Header, Layer, Transport, UdpDatagram};
use srv6sim::program::{
    run_endpoint_program, run_transit_program, Action, EncapMode, MapSpec, Program, ProgramContext, ProgramOutcome,
    ProgramRef,
};
use srv6sim::srv6::{FibEntry, ForwardingDecision, LocalBehavior, Prefix};
use srv6sim::{LinkId, Nexthop, NodeId, Packet, SegmentRoutingHeader, TableId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn vectors_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("test-vectors")
}

pub fn a(n: u16) -> Ipv6Addr {
    Ipv6Addr::new(0xfc00, 0, 0, 0, 0, 0, 0, n)
}

/// Address from a small pool, so that generated packets hit routes and
/// SIDs of the test nodes reasonably often.
pub fn pool_addr(r: &mut ChaCha8Rng) -> Ipv6Addr {
    match r.gen_range(0..4) {
        0 => Ipv6Addr::from(r.gen::<u128>()),
        _ => Ipv6Addr::new(0xfc00, r.gen_range(0..4), 0, 0, 0, 0, 0, r.gen_range(0..8)),
    }
}

fn random_tlvs(r: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::new();
    for _ in 0..r.gen_range(0..4) {
        let t = match r.gen_range(0..4) {
            0 => Tlv::new(1, r.gen::<u64>().to_be_bytes().to_vec()),
            1 => {
                let mut v = r.gen::<u128>().to_be_bytes().to_vec();
                v.extend_from_slice(&r.gen::<u16>().to_be_bytes());
                Tlv::new(2, v)
            }
            2 => Tlv::padn(r.gen_range(2..10)),
            _ => {
                let len = r.gen_range(0..14);
                Tlv::new(r.gen_range(0x80..=0xff), (0..len).map(|_| r.gen()).collect::<Vec<u8>>())
            }
        };
        t.write_to(&mut out);
    }
    pad_to_8(&mut out);
    out
}

pub fn random_srh(r: &mut ChaCha8Rng, max_segments: usize) -> SegmentRoutingHeader {
    let n = r.gen_range(1..=max_segments);
    let segments: Vec<Ipv6Addr> = (0..n).map(|_| pool_addr(r)).collect();
    let left = r.gen_range(0..n) as u8;
    let mut srh = SegmentRoutingHeader::new(segments, left).with_tlvs(random_tlvs(r));
    srh.flags = r.gen();
    srh.tag = r.gen();
    srh
}

fn random_ip(r: &mut ChaCha8Rng) -> Ipv6Header {
    let mut ip = Ipv6Header::new(pool_addr(r), pool_addr(r), r.gen());
    ip.traffic_class = r.gen();
    ip.flow_label = r.gen_range(0..1 << 20);
    ip
}

pub fn random_transport(r: &mut ChaCha8Rng) -> Transport {
    let len = r.gen_range(0..96);
    let bytes: Vec<u8> = (0..len).map(|_| r.gen()).collect();
    if r.gen_bool(0.75) {
        Transport::Udp(UdpDatagram::new(r.gen(), r.gen(), bytes))
    } else {
        let protocol = *[6u8, 58, 59, 132].choose(r).expect("non-empty");
        Transport::Opaque { protocol, bytes }
    }
}

/// A structurally valid packet: one or two IPv6 layers, up to two SRHs per
/// layer, UDP or an opaque upper layer. Lengths and checksum are filled.
pub fn random_packet(r: &mut ChaCha8Rng) -> Packet {
    let layers = (0..r.gen_range(1..=2))
        .map(|_| {
            let mut layer = Layer::new(random_ip(r));
            let srhs = match r.gen_range(0..6) {
                0 | 1 => 0,
                5 => 2,
                _ => 1,
            };
            for _ in 0..srhs {
                layer.srhs.push(random_srh(r, 6));
            }
            if let Some(active) = layer.srhs.first().and_then(|s| s.active_segment()) {
                layer.ip.dst = active;
            }
            layer
        })
        .collect();
    let mut p = Packet::new(layers, random_transport(r));
    p.refresh();
    p
}

/// An SR packet addressed to `sid`, as seen by the SID's node.
pub fn random_sr_packet(r: &mut ChaCha8Rng, sid: Ipv6Addr) -> Packet {
    let mut srh = random_srh(r, 5);
    let left = srh.segments_left as usize;
    srh.segments[left] = sid;
    let mut ip = random_ip(r);
    ip.dst = sid;
    ip.hop_limit = *[0u8, 1, 2, 64, 255].choose(r).expect("non-empty");
    let mut layers = vec![Layer::with_srh(ip, srh)];
    if r.gen_bool(0.3) {
        layers.push(Layer::new(random_ip(r)));
    }
    let mut p = Packet::new(layers, random_transport(r));
    p.refresh();
    p
}

/// Applies 1 to 4 random byte-level mutations.
pub fn mutate(r: &mut ChaCha8Rng, bytes: &mut Vec<u8>) {
    for _ in 0..r.gen_range(1..=4) {
        if bytes.is_empty() {
            bytes.push(r.gen());
            continue;
        }
        let i = r.gen_range(0..bytes.len());
        match r.gen_range(0..6) {
            0 => bytes[i] ^= 1 << r.gen_range(0..8),
            1 => bytes[i] = r.gen(),
            2 => bytes.truncate(i),
            3 => bytes.insert(i, r.gen()),
            4 => {
                bytes.remove(i);
            }
            _ => {
                // Length-bearing header fields are the interesting targets.
                let hot = [1usize, 3, 4, 5, 40, 41, 42, 43, 44];
                let j = *hot.choose(r).expect("non-empty");
                if j < bytes.len() {
                    bytes[j] = r.gen();
                }
            }
        }
    }
}

/// One node with two links, a default route and a few more specific ones.
pub fn test_node() -> srv6sim::srv6::Node {
    let mut n = srv6sim::srv6::Node::new(NodeId(1), "R", vec![a(1)]);
    n.attach_link(LinkId(1));
    n.attach_link(LinkId(2));
    let routes = [
        ("::/0", vec![Nexthop::new(a(0x50), LinkId(1))]),
        ("fc00:1::/32", vec![Nexthop::new(a(0x51), LinkId(1)), Nexthop::new(a(0x52), LinkId(2))]),
        ("fc00:2::/48", vec![Nexthop::new(a(0x52), LinkId(2))]),
    ];
    for (p, nhs) in routes {
        let prefix: Prefix = p.parse().expect("static prefix");
        n.fib_insert(FibEntry::new(prefix, nhs.clone(), TableId::MAIN).expect("nexthops"));
        n.fib_insert(FibEntry::new(prefix, nhs, TableId(7)).expect("nexthops"));
    }
    n
}

#[derive(Debug, Clone)]
pub enum Op {
    Store { offset: usize, data: Vec<u8> },
    Adjust(i32),
    Action(Action),
    Encap(EncapMode, SegmentRoutingHeader),
    MapPut { key: Vec<u8>, value: Vec<u8> },
    MapGet(Vec<u8>),
    Emit(usize),
    Ecmp(Ipv6Addr),
}

pub const FUZZ_MAP: &str = "fuzz";

pub fn random_op(r: &mut ChaCha8Rng) -> Op {
    match r.gen_range(0..10) {
        0..=2 => {
            let len = r.gen_range(1..=12);
            Op::Store {
                offset: r.gen_range(0..160),
                data: (0..len).map(|_| r.gen()).collect(),
            }
        }
        3 => Op::Adjust(if r.gen_bool(0.7) {
            8 * r.gen_range(-3..=3)
        } else {
            r.gen_range(-40..=40)
        }),
        4 => Op::Action(match r.gen_range(0..5) {
            0 => Action::EndX(Nexthop::new(a(0x52), LinkId(r.gen_range(1..=3)))),
            1 => Action::EndT(TableId(*[0u32, 7, 9].choose(r).expect("non-empty"))),
            2 => Action::EndB6(random_srh(r, 3)),
            3 => Action::EndB6Encaps {
                srh: random_srh(r, 3),
                src: None,
            },
            _ => Action::EndDT6(TableId(*[0u32, 7].choose(r).expect("non-empty"))),
        }),
        5 => Op::Encap(
            if r.gen_bool(0.5) {
                EncapMode::Insert
            } else {
                EncapMode::Encaps
            },
            random_srh(r, 3),
        ),
        6 => Op::MapPut {
            key: vec![r.gen(); *[4usize, 4, 3].choose(r).expect("non-empty")],
            value: vec![r.gen(); *[8usize, 8, 9].choose(r).expect("non-empty")],
        },
        7 => Op::MapGet(vec![r.gen(); *[4usize, 5].choose(r).expect("non-empty")]),
        8 => Op::Emit(r.gen_range(0..300)),
        _ => Op::Ecmp(pool_addr(r)),
    }
}

/// A program that replays a fixed list of helper calls and records any
/// rejected call that nevertheless changed the packet.
pub struct Scripted {
    pub ops: Vec<Op>,
    pub outcome: ProgramOutcome,
    pub violations: Arc<Mutex<Vec<String>>>,
}

impl Scripted {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let ops = (0..r.gen_range(0..8)).map(|_| random_op(r)).collect();
        let outcome = *[ProgramOutcome::Ok, ProgramOutcome::Drop, ProgramOutcome::Redirect]
            .choose(r)
            .expect("non-empty");
        Scripted {
            ops,
            outcome,
            violations: Arc::default(),
        }
    }
}

impl Program for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn maps(&self) -> Vec<MapSpec> {
        vec![MapSpec::new(FUZZ_MAP, 4, 8)]
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        for op in &self.ops {
            let before = ctx.packet().clone();
            let res = match op {
                Op::Store { offset, data } => ctx.store_bytes(*offset, data),
                Op::Adjust(d) => ctx.adjust_srh(*d),
                Op::Action(act) => ctx.action(act.clone()),
                Op::Encap(mode, srh) => ctx.push_encap(*mode, srh, None),
                Op::MapPut { key, value } => ctx.map_put(FUZZ_MAP, key, value),
                Op::MapGet(key) => ctx.map_get(FUZZ_MAP, key).map(|_| ()),
                Op::Emit(len) => ctx.emit_event(&vec![0x5a; *len]),
                Op::Ecmp(addr) => ctx.ecmp_nexthops(*addr).map(|_| ()),
            };
            if let Err(e) = res {
                let after = ctx.packet();
                if *after != before || after.meta != before.meta {
                    self.violations
                        .lock()
                        .expect("not poisoned")
                        .push(format!("{op:?} failed with {e} but changed the packet"));
                }
            }
        }
        self.outcome
    }
}

pub const SID: Ipv6Addr = Ipv6Addr::new(0xfc00, 0, 0, 0, 0, 0, 0, 0x100);

pub struct FuzzRun {
    pub violations: Vec<String>,
    /// Wire image of the packet when finalize accepted it.
    pub wire: Option<Vec<u8>>,
    pub calls: usize,
}

/// Runs one random scripted program on an endpoint or transit hook.
pub fn fuzz_once(seed: u64) -> FuzzRun {
    let mut r = rng(seed);
    let script = Scripted::random(&mut r);
    let calls = script.ops.len();
    let violations = script.violations.clone();
    let prog = ProgramRef::new(script);
    let mut node = test_node();
    node.add_local_sid(SID, LocalBehavior::EndBpf(prog.clone())).expect("one map");
    let (decision, packet) = if r.gen_bool(0.5) {
        let mut p = random_sr_packet(&mut r, SID);
        (run_endpoint_program(&mut node, &prog, &mut p, 1), p)
    } else {
        let mut p = random_packet(&mut r);
        (run_transit_program(&mut node, &prog, &mut p, 1), p)
    };
    let accepted = !matches!(decision, ForwardingDecision::Drop(_));
    let wire = accepted.then(|| encode_packet(&packet).expect("accepted packet encodes"));
    let violations = violations.lock().expect("not poisoned").clone();
    FuzzRun { violations, wire, calls }
}
