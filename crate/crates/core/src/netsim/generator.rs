use std::net::Ipv6Addr;

use crate::ids::NodeId;
use crate::packet::Packet;

use super::trace::stream_payload;

/// Constant-rate UDP source. Packet `i` leaves at `start_ns + i / rate`
/// and carries flow id and sequence number `i` in its payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpStream {
    pub node: NodeId,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub flow: u32,
    pub rate_pps: u64,
    pub payload_size: usize,
    pub count: u64,
    pub start_ns: u64,
    pub(crate) sent: u64,
}

impl UdpStream {
    pub fn new(node: NodeId, src: Ipv6Addr, dst: Ipv6Addr, rate_pps: u64, payload_size: usize, count: u64) -> Self {
        assert!(rate_pps > 0, "stream rate must be positive");
        UdpStream {
            node,
            src,
            dst,
            src_port: 40000,
            dst_port: 9,
            flow: 0,
            rate_pps,
            payload_size,
            count,
            start_ns: 0,
            sent: 0,
        }
    }

    pub fn with_flow(mut self, flow: u32) -> Self {
        self.flow = flow;
        self
    }

    pub fn starting_at(mut self, start_ns: u64) -> Self {
        self.start_ns = start_ns;
        self
    }

    pub fn send_time(&self, i: u64) -> u64 {
        self.start_ns + (u128::from(i) * 1_000_000_000 / u128::from(self.rate_pps)) as u64
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub(crate) fn next_packet(&mut self) -> Option<Packet> {
        if self.sent >= self.count {
            return None;
        }
        let seq = self.sent as u32;
        self.sent += 1;
        Some(Packet::udp(
            self.src,
            self.dst,
            self.src_port,
            self.dst_port,
            stream_payload(self.flow, seq, self.payload_size),
        ))
    }
}
