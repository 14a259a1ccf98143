use super::{Packet, PacketError, Transport, NEXT_HEADER_UDP, UDP_HEADER_LEN};

/// UDP checksum over the IPv6 pseudo-header, the UDP header (checksum
/// zeroed) and the payload.
///
/// The pseudo-header uses the innermost IPv6 source and the final
/// destination: when the innermost header carries SRHs, that is the final
/// segment of the last one. A zero result is sent as `0xffff`.
pub fn udp_checksum(p: &Packet) -> Result<u16, PacketError> {
    let Transport::Udp(udp) = &p.transport else {
        return Err(PacketError::NoTransport);
    };
    let inner = p.layers.last().ok_or(PacketError::NoTransport)?;
    let dst = inner
        .srhs
        .last()
        .and_then(|s| s.final_segment())
        .unwrap_or(inner.ip.dst);
    let udp_len = (UDP_HEADER_LEN + udp.payload.len()) as u32;

    let mut sum: u32 = 0;
    sum = add_bytes(sum, &inner.ip.src.octets());
    sum = add_bytes(sum, &dst.octets());
    sum = add_bytes(sum, &udp_len.to_be_bytes());
    sum += u32::from(NEXT_HEADER_UDP);
    sum += u32::from(udp.src_port);
    sum += u32::from(udp.dst_port);
    sum += udp_len & 0xffff;
    sum = add_bytes(sum, &udp.payload);

    let folded = !fold(sum);
    Ok(if folded == 0 { 0xffff } else { folded })
}

/// True when the carried checksum matches (or is the "no checksum" zero).
pub fn verify_udp_checksum(p: &Packet) -> Result<bool, PacketError> {
    let expected = udp_checksum(p)?;
    match &p.transport {
        Transport::Udp(u) => Ok(u.checksum == expected),
        Transport::Opaque { .. } => Err(PacketError::NoTransport),
    }
}

fn add_bytes(mut sum: u32, bytes: &[u8]) -> u32 {
    let mut chunks = bytes.chunks_exact(2);
    for c in &mut chunks {
        sum += u32::from(u16::from_be_bytes([c[0], c[1]]));
        sum = fold_partial(sum);
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    sum
}

fn fold_partial(sum: u32) -> u32 {
    if sum > 0xffff_0000 {
        (sum & 0xffff) + (sum >> 16)
    } else {
        sum
    }
}

fn fold(mut sum: u32) -> u16 {
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}
