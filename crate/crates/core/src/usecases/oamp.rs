//! End.OAMP: answers a prober with the ECMP nexthops towards the final
//! segment of the probe.

use std::any::Any;
use std::net::Ipv6Addr;

use crate::ids::NodeId;
use crate::netsim::{Daemon, Simulation};
use crate::packet::Packet;
use crate::program::{Program, ProgramContext, ProgramOutcome, MAX_EVENT_PAYLOAD};

use super::tlvs::{read_controller, Controller, CONTROLLER_TLV_LEN};

const REPLY_HEADER_LEN: usize = 6;
/// Nexthops that fit in one event next to the controller trailer.
pub const MAX_REPLY_NEXTHOPS: usize = (MAX_EVENT_PAYLOAD - REPLY_HEADER_LEN - CONTROLLER_TLV_LEN) / 16;
pub const OAMP_REPLY_SRC_PORT: u16 = 3784;

/// Reply body: hop_id:4, count:2, then count addresses. A count of zero
/// means the hop has no route to the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OampReply {
    pub hop_id: u32,
    pub nexthops: Vec<Ipv6Addr>,
}

impl OampReply {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(REPLY_HEADER_LEN + 16 * self.nexthops.len());
        b.extend_from_slice(&self.hop_id.to_be_bytes());
        b.extend_from_slice(&(self.nexthops.len() as u16).to_be_bytes());
        for a in &self.nexthops {
            b.extend_from_slice(&a.octets());
        }
        b
    }

    /// Parses a reply body; trailing octets beyond the list are ignored.
    pub fn parse(b: &[u8]) -> Option<(Self, &[u8])> {
        if b.len() < REPLY_HEADER_LEN {
            return None;
        }
        let hop_id = u32::from_be_bytes(b[..4].try_into().ok()?);
        let count = u16::from_be_bytes([b[4], b[5]]) as usize;
        let end = REPLY_HEADER_LEN + 16 * count;
        if b.len() < end {
            return None;
        }
        let nexthops = b[REPLY_HEADER_LEN..end]
            .chunks_exact(16)
            .map(|c| Ipv6Addr::from(<[u8; 16]>::try_from(c).unwrap_or_default()))
            .collect();
        Some((OampReply { hop_id, nexthops }, &b[end..]))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EndOamp;

impl Program for EndOamp {
    fn name(&self) -> &str {
        "end_oamp"
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        let Some(srh) = ctx.srh() else {
            return ProgramOutcome::Drop;
        };
        let Some(ctrl) = read_controller(srh) else {
            return ProgramOutcome::Drop;
        };
        let Some(target) = srh.final_segment() else {
            return ProgramOutcome::Drop;
        };
        let mut nexthops: Vec<Ipv6Addr> = match ctx.ecmp_nexthops(target) {
            Ok(list) => list.into_iter().map(|n| n.addr).collect(),
            Err(_) => Vec::new(),
        };
        nexthops.truncate(MAX_REPLY_NEXTHOPS);
        let mut payload = OampReply {
            hop_id: ctx.node().0,
            nexthops,
        }
        .to_bytes();
        payload.extend_from_slice(&ctrl.to_bytes());
        if let Err(e) = ctx.emit_event(&payload) {
            log::warn!("OAMP reply not emitted: {e}");
        }
        ProgramOutcome::Drop
    }
}

/// Turns End.OAMP events into UDP replies sent to the prober.
#[derive(Debug)]
pub struct OampResponder {
    pub node: NodeId,
    pub replies_sent: u64,
    pub malformed: u64,
}

impl OampResponder {
    pub fn new(node: NodeId) -> Self {
        OampResponder {
            node,
            replies_sent: 0,
            malformed: 0,
        }
    }
}

impl Daemon for OampResponder {
    fn name(&self) -> &str {
        "oamp_responder"
    }

    fn wake(&mut self, sim: &mut Simulation) {
        let src = sim.node(self.node).tables.primary_address();
        let now = sim.now();
        sim.take_inbox(self.node);
        for e in sim.node(self.node).events.drain() {
            let Some((reply, trailer)) = OampReply::parse(&e.payload) else {
                self.malformed += 1;
                continue;
            };
            let Some(ctrl) = Controller::from_bytes(trailer) else {
                self.malformed += 1;
                continue;
            };
            let p = Packet::udp(src, ctrl.addr, OAMP_REPLY_SRC_PORT, ctrl.port, reply.to_bytes());
            sim.inject(self.node, p, now);
            self.replies_sent += 1;
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_codec() {
        let r = OampReply {
            hop_id: 3,
            nexthops: vec!["fc00::2".parse().unwrap(), "fc00::3".parse().unwrap()],
        };
        let mut b = r.to_bytes();
        assert_eq!(b.len(), 6 + 32);
        b.extend_from_slice(&[9; 18]);
        let (back, rest) = OampReply::parse(&b).unwrap();
        assert_eq!(back, r);
        assert_eq!(rest, &[9; 18]);
        assert_eq!(MAX_REPLY_NEXTHOPS, 14);
    }
}
