//! In-process forwarding microbenchmark: decode, process, encode, with no
//! simulator in the loop.

use std::fmt;
use std::hint::black_box;
use std::net::Ipv6Addr;
use std::str::FromStr;
use std::time::Instant;

use crate::ids::{LinkId, Nexthop, NodeId, TableId};
use crate::packet::{decode_packet, encode_packet, encode_packet_into};
use crate::packet::{Ipv6Header, Layer, Packet, SegmentRoutingHeader, Transport, UdpDatagram};
use crate::program::samples::{AddTlv, EndTProgram, Noop, TagIncrement};
use crate::program::ProgramRef;
use crate::srv6::{process_ingress, FibEntry, ForwardingDecision, LocalBehavior, Node, Prefix};

use super::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchFunction {
    Plain,
    EndNative,
    EndProgramNoop,
    EndTProgram,
    TagIncrement,
    AddTlv,
}

impl BenchFunction {
    pub const ALL: [BenchFunction; 6] = [
        BenchFunction::Plain,
        BenchFunction::EndNative,
        BenchFunction::EndProgramNoop,
        BenchFunction::EndTProgram,
        BenchFunction::TagIncrement,
        BenchFunction::AddTlv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchFunction::Plain => "plain",
            BenchFunction::EndNative => "end_native",
            BenchFunction::EndProgramNoop => "end_program_noop",
            BenchFunction::EndTProgram => "end_t_program",
            BenchFunction::TagIncrement => "tag_increment",
            BenchFunction::AddTlv => "add_tlv",
        }
    }
}

impl fmt::Display for BenchFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown bench function {s:?}"))
    }
}

fn addr(s: &str) -> Ipv6Addr {
    s.parse().expect("static address")
}

/// One node with a single uplink and a default route, plus the wire
/// image of the packet each function is fed.
pub struct BenchCase {
    pub function: BenchFunction,
    node: Node,
    wire: Vec<u8>,
}

impl BenchCase {
    pub fn new(function: BenchFunction) -> Self {
        let me = addr("fc00:b::1");
        let sid = addr("fc00:b::100");
        let src = addr("fc00:a::1");
        let dst = addr("fc00:d::1");
        let mut node = Node::new(NodeId(0), "bench", vec![me]);
        node.attach_link(LinkId(0));
        let default = FibEntry::new(
            Prefix::new(Ipv6Addr::UNSPECIFIED, 0),
            vec![Nexthop::new(addr("fc00:c::1"), LinkId(0))],
            TableId::MAIN,
        )
        .expect("one nexthop");
        node.fib_insert(default);

        let behavior = match function {
            BenchFunction::Plain => None,
            BenchFunction::EndNative => Some(LocalBehavior::End),
            BenchFunction::EndProgramNoop => Some(LocalBehavior::EndBpf(ProgramRef::new(Noop))),
            BenchFunction::EndTProgram => Some(LocalBehavior::EndBpf(ProgramRef::new(EndTProgram {
                table: TableId::MAIN,
            }))),
            BenchFunction::TagIncrement => Some(LocalBehavior::EndBpf(ProgramRef::new(TagIncrement))),
            BenchFunction::AddTlv => Some(LocalBehavior::EndBpf(ProgramRef::new(AddTlv::default()))),
        };
        let payload = vec![0xab; 64];
        let packet = match behavior {
            None => Packet::udp(src, dst, 40000, 9, payload),
            Some(b) => {
                node.add_local_sid(sid, b).expect("sample programs declare consistent maps");
                Packet::new(
                    vec![Layer::with_srh(
                        Ipv6Header::new(src, sid, 64),
                        SegmentRoutingHeader::from_path(&[sid, dst]),
                    )],
                    Transport::Udp(UdpDatagram::new(40000, 9, payload)),
                )
            }
        };
        let wire = encode_packet(&packet).expect("bench packet encodes");
        BenchCase { function, node, wire }
    }

    /// Runs one packet through the pipeline and returns its decision.
    pub fn once(&mut self) -> (ForwardingDecision, Vec<u8>) {
        let p = decode_packet(&self.wire).expect("bench packet decodes");
        let out = process_ingress(&mut self.node, p, 0);
        let bytes = encode_packet(&out.packet).unwrap_or_default();
        (out.decision, bytes)
    }

    /// Processes `count` packets and returns the rate in packets/second.
    pub fn measure(&mut self, count: u64) -> f64 {
        let mut buf = Vec::with_capacity(256);
        let start = Instant::now();
        for i in 0..count {
            let p = decode_packet(black_box(&self.wire)).expect("bench packet decodes");
            let out = process_ingress(&mut self.node, p, i);
            buf.clear();
            let _ = encode_packet_into(&out.packet, &mut buf);
            black_box((&out.decision, &buf));
        }
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        count as f64 / secs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub function: BenchFunction,
    /// Best rate over all trials.
    pub pps: f64,
    pub trials: Vec<f64>,
}

/// Packets per timed chunk. Each trial's rate is taken from its fastest
/// chunk, which filters out preemption and frequency changes.
pub const CHUNK_PACKETS: u64 = 5_000;

/// Measures every function in `functions` for `trials` rounds of
/// `packets` packets each, with functions interleaved chunk by chunk so
/// drift hits them equally.
pub fn run_bench(functions: &[BenchFunction], packets: u64, trials: usize) -> Vec<BenchResult> {
    let mut cases: Vec<BenchCase> = functions.iter().map(|&f| BenchCase::new(f)).collect();
    for c in &mut cases {
        c.measure(CHUNK_PACKETS);
    }
    let chunks = packets.div_ceil(CHUNK_PACKETS).max(1);
    let mut rates = vec![Vec::with_capacity(trials); cases.len()];
    for _ in 0..trials.max(1) {
        let mut best = vec![0.0f64; cases.len()];
        for _ in 0..chunks {
            for (c, b) in cases.iter_mut().zip(&mut best) {
                *b = b.max(c.measure(CHUNK_PACKETS));
            }
        }
        for (r, b) in rates.iter_mut().zip(best) {
            r.push(b);
        }
    }
    cases
        .iter()
        .zip(rates)
        .map(|(c, trials)| BenchResult {
            function: c.function,
            pps: trials.iter().copied().fold(0.0, f64::max),
            trials,
        })
        .collect()
}

pub fn bench_report(results: &[BenchResult], packets: u64) -> Report {
    let mut r = Report::new("bench");
    r.param("packets", packets);
    r.param("trials", results.first().map_or(0, |b| b.trials.len()));
    let plain = results
        .iter()
        .find(|b| b.function == BenchFunction::Plain)
        .map(|b| b.pps);
    for b in results {
        r.metric(format!("{}.pps", b.function), b.pps.round(), "packets/s");
        if let Some(p) = plain {
            r.metric(format!("{}.relative", b.function), b.pps / p, "ratio");
        }
    }
    r
}
