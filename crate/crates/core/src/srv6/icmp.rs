//! Minimal ICMPv6 error messages: type, code, a zero checksum, four unused
//! octets, then the first 64 octets of the offending packet.

use std::net::Ipv6Addr;

use crate::packet::{encode_packet, Ipv6Header, Layer, Packet, Transport, NEXT_HEADER_ICMPV6};

pub const ICMP_DEST_UNREACHABLE: u8 = 1;
pub const ICMP_TIME_EXCEEDED: u8 = 3;
pub const CODE_PORT_UNREACHABLE: u8 = 4;
pub const QUOTE_LEN: usize = 64;
const ICMP_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcmpError<'a> {
    pub icmp_type: u8,
    pub code: u8,
    pub responder: Ipv6Addr,
    pub quoted: &'a [u8],
}

pub fn time_exceeded(from: Ipv6Addr, offender: &Packet) -> Option<Packet> {
    error_message(ICMP_TIME_EXCEEDED, 0, from, offender)
}

pub fn port_unreachable(from: Ipv6Addr, offender: &Packet) -> Option<Packet> {
    error_message(ICMP_DEST_UNREACHABLE, CODE_PORT_UNREACHABLE, from, offender)
}

fn is_icmp_error(p: &Packet) -> bool {
    matches!(&p.transport, Transport::Opaque { protocol, bytes }
        if *protocol == NEXT_HEADER_ICMPV6 && bytes.first().is_some_and(|t| *t < 128))
}

fn error_message(icmp_type: u8, code: u8, from: Ipv6Addr, offender: &Packet) -> Option<Packet> {
    if is_icmp_error(offender) || offender.outer().src.is_unspecified() {
        return None;
    }
    let quoted = encode_packet(offender).ok()?;
    let mut bytes = vec![icmp_type, code, 0, 0, 0, 0, 0, 0];
    bytes.extend_from_slice(&quoted[..quoted.len().min(QUOTE_LEN)]);
    Some(Packet::new(
        vec![Layer::new(Ipv6Header::new(from, offender.outer().src, 64))],
        Transport::Opaque {
            protocol: NEXT_HEADER_ICMPV6,
            bytes,
        },
    ))
}

/// Parses an ICMPv6 error produced by this module.
pub fn parse_error(p: &Packet) -> Option<IcmpError<'_>> {
    match &p.transport {
        Transport::Opaque { protocol, bytes }
            if *protocol == NEXT_HEADER_ICMPV6 && bytes.len() >= ICMP_HEADER_LEN && bytes[0] < 128 =>
        {
            Some(IcmpError {
                icmp_type: bytes[0],
                code: bytes[1],
                responder: p.outer().src,
                quoted: &bytes[ICMP_HEADER_LEN..],
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotes_offender_prefix() {
        let a: Ipv6Addr = "fc00::1".parse().unwrap();
        let r: Ipv6Addr = "fc00::9".parse().unwrap();
        let probe = Packet::udp(a, "fc00::2".parse().unwrap(), 1, 33434, vec![7; 100]);
        let msg = time_exceeded(r, &probe).unwrap();
        assert_eq!(msg.dst(), a);
        let e = parse_error(&msg).unwrap();
        assert_eq!(e.icmp_type, ICMP_TIME_EXCEEDED);
        assert_eq!(e.responder, r);
        assert_eq!(e.quoted.len(), QUOTE_LEN);
        assert_eq!(e.quoted[..], encode_packet(&probe).unwrap()[..QUOTE_LEN]);
        // never an error about an error
        assert!(time_exceeded(r, &msg).is_none());
    }
}
