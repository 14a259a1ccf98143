use std::net::Ipv6Addr;

use log::warn;

use super::{
    checksum, Ipv6Header, Layer, Packet, PacketError, PacketMeta, ParseReason,
    SegmentRoutingHeader, Transport, UdpDatagram, IPV6_HEADER_LEN, IPV6_VERSION, NEXT_HEADER_IPV6,
    NEXT_HEADER_ROUTING, NEXT_HEADER_UDP, ROUTING_TYPE_SRH, SRH_FIXED_LEN, UDP_HEADER_LEN,
};

/// Serializes a packet. Payload lengths and the UDP length and checksum are
/// recomputed; every other field is written as stored.
pub fn encode_packet(p: &Packet) -> Result<Vec<u8>, PacketError> {
    let mut out = Vec::with_capacity(p.encoded_len());
    encode_packet_into(p, &mut out)?;
    Ok(out)
}

/// Like [`encode_packet`], appending to `out`.
pub fn encode_packet_into(p: &Packet, out: &mut Vec<u8>) -> Result<(), PacketError> {
    p.check()?;
    let mut remaining = p.encoded_len();
    for layer in &p.layers {
        remaining -= IPV6_HEADER_LEN;
        write_ipv6(&layer.ip, remaining as u16, out);
        for srh in &layer.srhs {
            srh.write_to(out);
            remaining -= srh.encoded_len();
        }
    }
    match &p.transport {
        Transport::Udp(u) => {
            let sum = checksum::udp_checksum(p)?;
            out.extend_from_slice(&u.src_port.to_be_bytes());
            out.extend_from_slice(&u.dst_port.to_be_bytes());
            out.extend_from_slice(&((UDP_HEADER_LEN + u.payload.len()) as u16).to_be_bytes());
            out.extend_from_slice(&sum.to_be_bytes());
            out.extend_from_slice(&u.payload);
        }
        Transport::Opaque { bytes, .. } => out.extend_from_slice(bytes),
    }
    Ok(())
}

fn write_ipv6(ip: &Ipv6Header, payload_length: u16, out: &mut Vec<u8>) {
    let word = (u32::from(IPV6_VERSION) << 28)
        | (u32::from(ip.traffic_class) << 20)
        | (ip.flow_label & 0x000f_ffff);
    out.extend_from_slice(&word.to_be_bytes());
    out.extend_from_slice(&payload_length.to_be_bytes());
    out.push(ip.next_header);
    out.push(ip.hop_limit);
    out.extend_from_slice(&ip.src.octets());
    out.extend_from_slice(&ip.dst.octets());
}

fn need(buf: &[u8], at: usize, n: usize) -> Result<(), PacketError> {
    if buf.len() < at + n {
        Err(PacketError::parse(
            at,
            ParseReason::Truncated {
                need: at + n,
                have: buf.len(),
            },
        ))
    } else {
        Ok(())
    }
}

fn addr_at(buf: &[u8], at: usize) -> Ipv6Addr {
    let mut o = [0u8; 16];
    o.copy_from_slice(&buf[at..at + 16]);
    Ipv6Addr::from(o)
}

/// Parses stacked IPv6 headers, SRHs and UDP. The returned packet carries
/// fresh metadata. A wrong UDP checksum is logged, not rejected.
pub fn decode_packet(buf: &[u8]) -> Result<Packet, PacketError> {
    let mut layers = Vec::new();
    let mut pos = 0;
    let transport_proto = loop {
        need(buf, pos, IPV6_HEADER_LEN)?;
        let word = u32::from_be_bytes([buf[pos], buf[pos + 1], buf[pos + 2], buf[pos + 3]]);
        let version = (word >> 28) as u8;
        if version != IPV6_VERSION {
            return Err(PacketError::parse(pos, ParseReason::BadVersion(version)));
        }
        let payload_length = u16::from_be_bytes([buf[pos + 4], buf[pos + 5]]);
        if pos + IPV6_HEADER_LEN + payload_length as usize != buf.len() {
            return Err(PacketError::parse(
                pos + 4,
                ParseReason::InconsistentLength("payload_length does not match remaining octets"),
            ));
        }
        let ip = Ipv6Header {
            traffic_class: ((word >> 20) & 0xff) as u8,
            flow_label: word & 0x000f_ffff,
            payload_length,
            next_header: buf[pos + 6],
            hop_limit: buf[pos + 7],
            src: addr_at(buf, pos + 8),
            dst: addr_at(buf, pos + 24),
        };
        pos += IPV6_HEADER_LEN;
        let mut nh = ip.next_header;
        let mut srhs = Vec::new();
        while nh == NEXT_HEADER_ROUTING {
            let srh = decode_srh(buf, pos)?;
            pos += srh.encoded_len();
            nh = srh.next_header;
            srhs.push(srh);
        }
        layers.push(Layer { ip, srhs });
        if nh != NEXT_HEADER_IPV6 {
            break nh;
        }
    };

    let transport = if transport_proto == NEXT_HEADER_UDP {
        need(buf, pos, UDP_HEADER_LEN)?;
        let length = u16::from_be_bytes([buf[pos + 4], buf[pos + 5]]);
        if length as usize != buf.len() - pos {
            return Err(PacketError::parse(
                pos + 4,
                ParseReason::InconsistentLength("UDP length does not match remaining octets"),
            ));
        }
        Transport::Udp(UdpDatagram {
            src_port: u16::from_be_bytes([buf[pos], buf[pos + 1]]),
            dst_port: u16::from_be_bytes([buf[pos + 2], buf[pos + 3]]),
            length,
            checksum: u16::from_be_bytes([buf[pos + 6], buf[pos + 7]]),
            payload: buf[pos + UDP_HEADER_LEN..].to_vec(),
        })
    } else {
        Transport::Opaque {
            protocol: transport_proto,
            bytes: buf[pos..].to_vec(),
        }
    };

    let packet = Packet {
        layers,
        transport,
        meta: PacketMeta::default(),
    };
    if let Transport::Udp(u) = &packet.transport {
        if let Ok(expected) = checksum::udp_checksum(&packet) {
            if expected != u.checksum {
                warn!(
                    "UDP checksum mismatch: carried {:#06x}, computed {:#06x}",
                    u.checksum, expected
                );
            }
        }
    }
    Ok(packet)
}

fn decode_srh(buf: &[u8], pos: usize) -> Result<SegmentRoutingHeader, PacketError> {
    need(buf, pos, SRH_FIXED_LEN)?;
    let routing_type = buf[pos + 2];
    if routing_type != ROUTING_TYPE_SRH {
        return Err(PacketError::parse(
            pos + 2,
            ParseReason::BadRoutingType(routing_type),
        ));
    }
    let hdr_ext_len = buf[pos + 1];
    let total = 8 * (hdr_ext_len as usize + 1);
    let last_entry = buf[pos + 4];
    let seg_octets = 16 * (last_entry as usize + 1);
    if SRH_FIXED_LEN + seg_octets > total {
        return Err(PacketError::parse(
            pos + 1,
            ParseReason::InconsistentLength("hdr_ext_len smaller than the segment list"),
        ));
    }
    need(buf, pos, total)?;
    let segments = (0..=last_entry as usize)
        .map(|i| addr_at(buf, pos + SRH_FIXED_LEN + 16 * i))
        .collect();
    let srh = SegmentRoutingHeader {
        next_header: buf[pos],
        hdr_ext_len,
        routing_type,
        segments_left: buf[pos + 3],
        last_entry,
        flags: buf[pos + 5],
        tag: u16::from_be_bytes([buf[pos + 6], buf[pos + 7]]),
        segments,
        tlv_bytes: buf[pos + SRH_FIXED_LEN + seg_octets..pos + total].to_vec(),
    };
    srh.validate()
        .map_err(|v| PacketError::parse(pos, ParseReason::InvalidSrh(v)))?;
    Ok(srh)
}
