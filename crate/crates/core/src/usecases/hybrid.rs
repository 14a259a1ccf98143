//! Delay compensation for hybrid access: a prober measures two-way delay
//! on each link and the compensator delays the faster link by half the
//! difference.

use std::any::Any;
use std::collections::HashMap;
use std::net::Ipv6Addr;

use crate::ids::{LinkId, NodeId};
use crate::netsim::{Daemon, Simulation, NS_PER_MS};
use crate::packet::{Ipv6Header, Layer, Packet, SegmentRoutingHeader, Transport, UdpDatagram};

use super::tlvs::{dm_probe_tlvs, read_dm, Controller};

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_PROBE_INTERVAL_NS: u64 = 100 * NS_PER_MS;

/// EWMA of two-way delay per link and the resulting compensation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorState {
    pub alpha: f64,
    pub ewma_ns: [Option<f64>; 2],
    pub applied_delay_ns: u64,
    /// Index of the link currently delayed.
    pub fast_link: Option<usize>,
}

impl CompensatorState {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
        CompensatorState {
            alpha,
            ewma_ns: [None; 2],
            applied_delay_ns: 0,
            fast_link: None,
        }
    }

    /// Folds in one sample for `link` (0 or 1). Once both links have a
    /// value, the faster one is delayed by half the difference.
    pub fn update(&mut self, link: usize, twd_sample_ns: u64) {
        let s = twd_sample_ns as f64;
        let e = &mut self.ewma_ns[link];
        *e = Some(match *e {
            None => s,
            Some(prev) => self.alpha * s + (1.0 - self.alpha) * prev,
        });
        if let [Some(a), Some(b)] = self.ewma_ns {
            let (fast, slow, fast_idx) = if a <= b { (a, b, 0) } else { (b, a, 1) };
            self.fast_link = Some(fast_idx);
            self.applied_delay_ns = ((slow - fast) / 2.0).max(0.0).round() as u64;
        }
    }
}

/// One measured path: the link it is pinned to and the two SIDs that pin
/// it (End.DM at the far end, End back at the prober).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbedLink {
    pub link: LinkId,
    pub dm_sid: Ipv6Addr,
    pub return_sid: Ipv6Addr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwdSample {
    pub time_ns: u64,
    pub link: usize,
    pub twd_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppliedDelay {
    pub time_ns: u64,
    pub link: LinkId,
    pub delay_ns: u64,
}

/// Sends two-way probes on both links at a fixed interval and, when
/// `compensate` is set, programs the extra egress delay.
#[derive(Debug)]
pub struct TwdProber {
    pub node: NodeId,
    pub links: [ProbedLink; 2],
    pub port: u16,
    pub interval_ns: u64,
    pub compensate: bool,
    pub state: CompensatorState,
    pub samples: Vec<TwdSample>,
    pub history: Vec<AppliedDelay>,
    pub probes_sent: [u64; 2],
    in_flight: HashMap<(usize, u64), u64>,
}

impl TwdProber {
    pub fn new(node: NodeId, links: [ProbedLink; 2], port: u16) -> Self {
        TwdProber {
            node,
            links,
            port,
            interval_ns: DEFAULT_PROBE_INTERVAL_NS,
            compensate: true,
            state: CompensatorState::new(DEFAULT_ALPHA),
            samples: Vec::new(),
            history: Vec::new(),
            probes_sent: [0; 2],
            in_flight: HashMap::new(),
        }
    }

    fn probe(&self, idx: usize, src: Ipv6Addr, now: u64) -> Packet {
        let l = self.links[idx];
        let srh = SegmentRoutingHeader::from_path(&[l.dm_sid, l.return_sid, src])
            .with_tlvs(dm_probe_tlvs(now, Controller::new(src, self.port)))
            .with_tag(idx as u16);
        Packet::new(
            vec![Layer::with_srh(Ipv6Header::new(src, l.dm_sid, 64), srh)],
            Transport::Udp(UdpDatagram::new(self.port, self.port, vec![0; 16])),
        )
    }

    fn apply(&mut self, sim: &mut Simulation) {
        let Some(fast) = self.state.fast_link else { return };
        let now = sim.now();
        for (i, l) in self.links.iter().enumerate() {
            let want = if i == fast { self.state.applied_delay_ns } else { 0 };
            if sim.qdisc_delay(self.node, l.link) != Some(want) {
                if let Err(e) = sim.set_qdisc_delay(self.node, l.link, want) {
                    log::warn!("compensation not applied: {e}");
                    continue;
                }
                self.history.push(AppliedDelay {
                    time_ns: now,
                    link: l.link,
                    delay_ns: want,
                });
            }
        }
    }
}

impl Daemon for TwdProber {
    fn name(&self) -> &str {
        "twd_prober"
    }

    fn tick(&mut self, sim: &mut Simulation) -> Option<u64> {
        let now = sim.now();
        let src = sim.node(self.node).tables.primary_address();
        for i in 0..2 {
            // the probe also sits in our own delay queue; remember it so
            // the sample reflects the link alone
            let extra = sim.qdisc_delay(self.node, self.links[i].link).unwrap_or(0);
            self.in_flight.insert((i, now), extra);
            sim.inject(self.node, self.probe(i, src, now), now);
            self.probes_sent[i] += 1;
        }
        Some(now + self.interval_ns)
    }

    fn wake(&mut self, sim: &mut Simulation) {
        let mut changed = false;
        for c in sim.take_inbox(self.node) {
            let Some(srh) = c.packet.outer_srh() else { continue };
            let Some(udp) = c.packet.udp_datagram() else { continue };
            if udp.dst_port != self.port {
                continue;
            }
            let (Some(tx), idx) = (read_dm(srh), srh.tag as usize) else { continue };
            let Some(extra) = self.in_flight.remove(&(idx, tx)) else { continue };
            let twd = (c.time_ns - tx).saturating_sub(extra);
            self.samples.push(TwdSample {
                time_ns: c.time_ns,
                link: idx,
                twd_ns: twd,
            });
            self.state.update(idx, twd);
            changed = true;
        }
        if changed && self.compensate {
            self.apply(sim);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
