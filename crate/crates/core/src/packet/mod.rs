//! IPv6 packets with Segment Routing Headers.
//!
//! A [`Packet`] is an outer-to-inner stack of IPv6 headers (each optionally
//! followed by one or more SRHs), a transport layer and per-hop metadata.
//! [`encode_packet`] and [`decode_packet`] convert to and from wire bytes.

mod checksum;
mod codec;
pub mod hexdump;
mod srh;
pub mod tlv;

use std::net::Ipv6Addr;

use thiserror::Error;

use crate::ids::{Nexthop, NodeId, TableId};

pub use checksum::{udp_checksum, verify_udp_checksum};
pub use codec::{decode_packet, encode_packet, encode_packet_into};
pub use srh::{
    validate_srh, SegmentRoutingHeader, OFFSET_FLAGS, OFFSET_LAST_ENTRY, OFFSET_SEGMENTS_LEFT,
    OFFSET_TAG, SRH_FIXED_LEN,
};
pub use tlv::{Tlv, TlvRef};

pub const IPV6_VERSION: u8 = 6;
pub const IPV6_HEADER_LEN: usize = 40;
pub const UDP_HEADER_LEN: usize = 8;

pub const NEXT_HEADER_IPV6: u8 = 41;
pub const NEXT_HEADER_ROUTING: u8 = 43;
pub const NEXT_HEADER_UDP: u8 = 17;
pub const NEXT_HEADER_ICMPV6: u8 = 58;
pub const NEXT_HEADER_NONE: u8 = 59;
pub const ROUTING_TYPE_SRH: u8 = 4;

/// A broken SRH invariant. Offsets are relative to the start of the SRH.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SrhViolation {
    #[error("routing type {0} is not 4")]
    BadRoutingType(u8),
    #[error("empty segment list")]
    EmptySegmentList,
    #[error("last_entry {last_entry} does not match {segments} segments")]
    LastEntryMismatch { last_entry: u8, segments: usize },
    #[error("segments_left {segments_left} exceeds last_entry {last_entry}")]
    SegmentsLeftOutOfRange { segments_left: u8, last_entry: u8 },
    #[error("TLV region of {tlv_len} octets is not 8-octet aligned")]
    TlvMisaligned { tlv_len: usize },
    #[error("header of {octets} octets does not fit hdr_ext_len")]
    SizeOverflow { octets: usize },
    #[error("hdr_ext_len {hdr_ext_len} disagrees with {actual} encoded octets")]
    LengthMismatch { hdr_ext_len: u8, actual: usize },
    #[error("TLV at offset {offset} runs past the end of the header")]
    TlvOverrun { offset: usize },
    #[error("unfilled TLV space at offset {offset}")]
    RawFillInvalid { offset: usize },
}

impl SrhViolation {
    fn shifted(self, by: usize) -> Self {
        match self {
            SrhViolation::TlvOverrun { offset } => SrhViolation::TlvOverrun { offset: offset + by },
            SrhViolation::RawFillInvalid { offset } => {
                SrhViolation::RawFillInvalid { offset: offset + by }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("parse error at offset {offset}: {reason}")]
    Parse { offset: usize, reason: ParseReason },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("packet has no UDP layer")]
    NoTransport,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseReason {
    #[error("truncated: need {need} octets, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("IP version {0}")]
    BadVersion(u8),
    #[error("bad routing type {0}")]
    BadRoutingType(u8),
    #[error("inconsistent length: {0}")]
    InconsistentLength(&'static str),
    #[error("invalid SRH: {0}")]
    InvalidSrh(SrhViolation),
}

impl PacketError {
    pub(crate) fn parse(offset: usize, reason: ParseReason) -> Self {
        PacketError::Parse { offset, reason }
    }
}

/// Fixed IPv6 header. The version field is implicit (always 6).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv6Header {
    pub traffic_class: u8,
    pub flow_label: u32,
    pub payload_length: u16,
    pub next_header: u8,
    pub hop_limit: u8,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
}

impl Ipv6Header {
    pub fn new(src: Ipv6Addr, dst: Ipv6Addr, hop_limit: u8) -> Self {
        Ipv6Header {
            traffic_class: 0,
            flow_label: 0,
            payload_length: 0,
            next_header: NEXT_HEADER_NONE,
            hop_limit,
            src,
            dst,
        }
    }
}

/// One IPv6 header and the routing headers that directly follow it,
/// outermost first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub ip: Ipv6Header,
    pub srhs: Vec<SegmentRoutingHeader>,
}

impl Layer {
    pub fn new(ip: Ipv6Header) -> Self {
        Layer {
            ip,
            srhs: Vec::new(),
        }
    }

    pub fn with_srh(ip: Ipv6Header, srh: SegmentRoutingHeader) -> Self {
        Layer {
            ip,
            srhs: vec![srh],
        }
    }

    pub fn srh(&self) -> Option<&SegmentRoutingHeader> {
        self.srhs.first()
    }

    fn header_len(&self) -> usize {
        IPV6_HEADER_LEN + self.srhs.iter().map(|s| s.encoded_len()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpDatagram {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
    pub payload: Vec<u8>,
}

impl UdpDatagram {
    pub fn new(src_port: u16, dst_port: u16, payload: Vec<u8>) -> Self {
        UdpDatagram {
            src_port,
            dst_port,
            length: (UDP_HEADER_LEN + payload.len()).min(u16::MAX as usize) as u16,
            checksum: 0,
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Udp(UdpDatagram),
    /// Any other upper-layer protocol, carried as raw octets.
    Opaque { protocol: u8, bytes: Vec<u8> },
}

impl Transport {
    pub fn protocol(&self) -> u8 {
        match self {
            Transport::Udp(_) => NEXT_HEADER_UDP,
            Transport::Opaque { protocol, .. } => *protocol,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Transport::Udp(u) => UDP_HEADER_LEN + u.payload.len(),
            Transport::Opaque { bytes, .. } => bytes.len(),
        }
    }
}

/// Per-hop metadata. Not part of the wire format.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PacketMeta {
    pub pending_destination: Option<Nexthop>,
    pub pending_table: Option<TableId>,
    pub rx_timestamp_ns: u64,
    pub ingress_node: Option<NodeId>,
    pub srh_dirty: bool,
}

/// An IPv6 packet: header stack (outermost first), transport and metadata.
///
/// Equality ignores [`PacketMeta`].
#[derive(Debug, Clone)]
pub struct Packet {
    pub layers: Vec<Layer>,
    pub transport: Transport,
    pub meta: PacketMeta,
}

impl PartialEq for Packet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.transport == other.transport
    }
}

impl Eq for Packet {}

impl Packet {
    /// Builds a packet and fills in every derived field.
    pub fn new(layers: Vec<Layer>, transport: Transport) -> Self {
        let mut p = Packet {
            layers,
            transport,
            meta: PacketMeta::default(),
        };
        p.refresh();
        p
    }

    /// A plain IPv6/UDP packet.
    pub fn udp(src: Ipv6Addr, dst: Ipv6Addr, src_port: u16, dst_port: u16, payload: Vec<u8>) -> Self {
        Packet::new(
            vec![Layer::new(Ipv6Header::new(src, dst, 64))],
            Transport::Udp(UdpDatagram::new(src_port, dst_port, payload)),
        )
    }

    pub fn outer(&self) -> &Ipv6Header {
        &self.layers[0].ip
    }

    pub fn outer_mut(&mut self) -> &mut Ipv6Header {
        &mut self.layers[0].ip
    }

    pub fn dst(&self) -> Ipv6Addr {
        self.outer().dst
    }

    pub fn outer_srh(&self) -> Option<&SegmentRoutingHeader> {
        self.layers.first().and_then(|l| l.srhs.first())
    }

    pub fn outer_srh_mut(&mut self) -> Option<&mut SegmentRoutingHeader> {
        self.layers.first_mut().and_then(|l| l.srhs.first_mut())
    }

    pub fn udp_datagram(&self) -> Option<&UdpDatagram> {
        match &self.transport {
            Transport::Udp(u) => Some(u),
            Transport::Opaque { .. } => None,
        }
    }

    pub fn encoded_len(&self) -> usize {
        self.layers.iter().map(Layer::header_len).sum::<usize>() + self.transport.encoded_len()
    }

    /// Recomputes next-header chaining, payload lengths and the UDP length
    /// and checksum. SRH length fields are left alone so that malformed
    /// headers stay detectable.
    pub fn refresh(&mut self) {
        self.refresh_lengths();
        if let Ok(sum) = udp_checksum(self) {
            if let Transport::Udp(u) = &mut self.transport {
                u.checksum = sum;
            }
        }
    }

    /// Like [`refresh`](Self::refresh) without touching the UDP checksum.
    pub fn refresh_lengths(&mut self) {
        let proto = self.transport.protocol();
        if let Transport::Udp(u) = &mut self.transport {
            u.length = (UDP_HEADER_LEN + u.payload.len()).min(u16::MAX as usize) as u16;
        }
        let mut below = self.transport.encoded_len();
        let n = self.layers.len();
        for i in (0..n).rev() {
            let next = if i + 1 < n { NEXT_HEADER_IPV6 } else { proto };
            let layer = &mut self.layers[i];
            let mut nh = next;
            for srh in layer.srhs.iter_mut().rev() {
                srh.next_header = nh;
                nh = NEXT_HEADER_ROUTING;
            }
            layer.ip.next_header = nh;
            let payload = below + layer.srhs.iter().map(|s| s.encoded_len()).sum::<usize>();
            layer.ip.payload_length = payload.min(u16::MAX as usize) as u16;
            below = payload + IPV6_HEADER_LEN;
        }
    }

    /// Checks the structural invariants that encoding relies on.
    pub fn check(&self) -> Result<(), PacketError> {
        if self.layers.is_empty() {
            return Err(PacketError::InvariantViolation("no IPv6 header".into()));
        }
        let proto = self.transport.protocol();
        if proto == NEXT_HEADER_ROUTING || proto == NEXT_HEADER_IPV6 {
            return Err(PacketError::InvariantViolation(format!(
                "transport protocol {proto} collides with header chaining"
            )));
        }
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let next = if i + 1 < n { NEXT_HEADER_IPV6 } else { proto };
            let mut expect = layer.ip.next_header;
            for (j, srh) in layer.srhs.iter().enumerate() {
                srh.validate().map_err(|v| {
                    PacketError::InvariantViolation(format!("layer {i} srh {j}: {v}"))
                })?;
                if expect != NEXT_HEADER_ROUTING {
                    return Err(PacketError::InvariantViolation(format!(
                        "layer {i}: next_header {expect} before SRH {j}"
                    )));
                }
                expect = srh.next_header;
            }
            if expect != next {
                return Err(PacketError::InvariantViolation(format!(
                    "layer {i}: next_header {expect}, expected {next}"
                )));
            }
        }
        if self.encoded_len() - IPV6_HEADER_LEN > u16::MAX as usize {
            return Err(PacketError::InvariantViolation("payload exceeds 65535 octets".into()));
        }
        Ok(())
    }

    /// Validates every SRH in the packet.
    pub fn validate_srhs(&self) -> Result<(), SrhViolation> {
        self.layers
            .iter()
            .flat_map(|l| l.srhs.iter())
            .try_for_each(|s| s.validate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: u16) -> Ipv6Addr {
        Ipv6Addr::new(0xfc00, 0, 0, 0, 0, 0, 0, n)
    }

    #[test]
    fn refresh_chains_headers() {
        let srh = SegmentRoutingHeader::from_path(&[a(3), a(4)]);
        let inner = Layer::new(Ipv6Header::new(a(1), a(4), 64));
        let outer = Layer::with_srh(Ipv6Header::new(a(9), a(3), 64), srh);
        let p = Packet::new(
            vec![outer, inner],
            Transport::Udp(UdpDatagram::new(1, 2, vec![0; 10])),
        );
        assert_eq!(p.layers[0].ip.next_header, NEXT_HEADER_ROUTING);
        assert_eq!(p.layers[0].srhs[0].next_header, NEXT_HEADER_IPV6);
        assert_eq!(p.layers[1].ip.next_header, NEXT_HEADER_UDP);
        assert_eq!(p.layers[1].ip.payload_length, 18);
        assert_eq!(p.layers[0].ip.payload_length, 40 + 40 + 18);
        assert_eq!(p.encoded_len(), 40 + 40 + 40 + 18);
        assert!(p.check().is_ok());
    }

    #[test]
    fn check_flags_broken_chain() {
        let mut p = Packet::udp(a(1), a(2), 1, 2, vec![]);
        p.layers[0].ip.next_header = NEXT_HEADER_ROUTING;
        assert!(matches!(p.check(), Err(PacketError::InvariantViolation(_))));
    }

    #[test]
    fn equality_ignores_meta() {
        let p = Packet::udp(a(1), a(2), 1, 2, vec![1, 2, 3]);
        let mut q = p.clone();
        q.meta.rx_timestamp_ns = 99;
        q.meta.srh_dirty = true;
        assert_eq!(p, q);
    }
}
