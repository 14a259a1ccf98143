//! Native SRv6 endpoint and transit behaviors.
//!
//! Each function mutates the packet in place and leaves every length field
//! consistent. Forwarding itself is decided later by
//! [`NodeTables::resolve`](super::NodeTables::resolve), which honours the
//! pending destination and table stored in the packet metadata.

use std::net::Ipv6Addr;

use thiserror::Error;

use crate::ids::{Nexthop, TableId};
use crate::packet::{Ipv6Header, Layer, Packet, SegmentRoutingHeader, SrhViolation, IPV6_HEADER_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SrError {
    #[error("packet carries no SRH")]
    NoSrh,
    #[error("segments_left is already 0")]
    SegmentsExhausted,
    #[error("segments_left is not 0")]
    NotLastSegment,
    #[error("no inner IPv6 header")]
    NoInnerHeader,
    #[error("packet already carries an SRH")]
    AlreadySegmentRouted,
    #[error("inner hop limit exhausted")]
    HopLimitExceeded,
    #[error("invalid SRH: {0}")]
    Invalid(#[from] SrhViolation),
    #[error("packet would exceed 65535 payload octets")]
    TooLarge,
}

/// Decrements segments_left and copies the new active segment into the
/// outer destination. An exhausted top SRH stacked above another one is
/// removed first.
pub fn end(p: &mut Packet) -> Result<(), SrError> {
    let layer = &mut p.layers[0];
    if layer.srhs.is_empty() {
        return Err(SrError::NoSrh);
    }
    let mut popped = false;
    while layer.srhs.len() > 1 && layer.srhs[0].segments_left == 0 {
        layer.srhs.remove(0);
        popped = true;
    }
    let srh = &mut layer.srhs[0];
    if srh.segments_left == 0 {
        return Err(SrError::SegmentsExhausted);
    }
    let next = srh.segments_left - 1;
    let Some(&seg) = srh.segments.get(next as usize) else {
        return Err(SrError::Invalid(SrhViolation::SegmentsLeftOutOfRange {
            segments_left: srh.segments_left,
            last_entry: srh.last_entry,
        }));
    };
    srh.segments_left = next;
    layer.ip.dst = seg;
    if popped {
        p.refresh_lengths();
    }
    Ok(())
}

/// End, then forward to a fixed neighbor without a FIB lookup.
pub fn end_x(p: &mut Packet, nexthop: Nexthop) -> Result<(), SrError> {
    end(p)?;
    p.meta.pending_destination = Some(nexthop);
    Ok(())
}

/// End, then look the next segment up in `table`.
pub fn end_t(p: &mut Packet, table: TableId) -> Result<(), SrError> {
    end(p)?;
    p.meta.pending_table = Some(table);
    Ok(())
}

/// End, then stack `new_srh` on top of the existing SRH.
pub fn end_b6(p: &mut Packet, new_srh: &SegmentRoutingHeader) -> Result<(), SrError> {
    new_srh.validate()?;
    check_growth(p, new_srh.encoded_len())?;
    end(p)?;
    push_srh(p, new_srh)
}

/// Stacks `srh` on top of the outer SRH without advancing.
pub fn push_srh(p: &mut Packet, srh: &SegmentRoutingHeader) -> Result<(), SrError> {
    srh.validate()?;
    let active = srh.active_segment().ok_or(SrError::NoSrh)?;
    check_growth(p, srh.encoded_len())?;
    insert_srh(p, srh.clone(), active);
    Ok(())
}

/// End, then encapsulate the whole packet in a new outer header carrying
/// `srh`.
pub fn end_b6_encaps(
    p: &mut Packet,
    srh: &SegmentRoutingHeader,
    src: Ipv6Addr,
    hop_limit: u8,
) -> Result<(), SrError> {
    srh.validate()?;
    check_growth(p, IPV6_HEADER_LEN + srh.encoded_len())?;
    end(p)?;
    encapsulate(p, srh.clone(), src, hop_limit)
}

/// Strips the outer header at the last segment and looks the inner
/// destination up in `table`. Forwarding the inner packet costs one hop.
pub fn end_dt6(p: &mut Packet, table: TableId) -> Result<(), SrError> {
    if let Some(srh) = p.outer_srh() {
        if srh.segments_left != 0 {
            return Err(SrError::NotLastSegment);
        }
    }
    if p.layers.len() < 2 {
        return Err(SrError::NoInnerHeader);
    }
    if p.layers[1].ip.hop_limit <= 1 {
        return Err(SrError::HopLimitExceeded);
    }
    p.layers.remove(0);
    p.layers[0].ip.hop_limit -= 1;
    p.meta.pending_table = Some(table);
    p.meta.pending_destination = None;
    Ok(())
}

/// Inserts `srh` after the IPv6 header of a packet without an SRH. The
/// original destination becomes the final segment.
pub fn t_insert(p: &mut Packet, srh: &SegmentRoutingHeader) -> Result<(), SrError> {
    if !p.layers[0].srhs.is_empty() {
        return Err(SrError::AlreadySegmentRouted);
    }
    srh.validate()?;
    let mut srh = srh.clone();
    srh.segments.insert(0, p.dst());
    srh.segments_left = srh.segments_left.checked_add(1).ok_or(SrError::TooLarge)?;
    srh.sync_lengths();
    srh.validate()?;
    check_growth(p, srh.encoded_len())?;
    let active = srh.active_segment().ok_or(SrError::NoSrh)?;
    insert_srh(p, srh, active);
    Ok(())
}

/// Encapsulates the packet in a new outer IPv6 header carrying `srh`.
pub fn t_encaps(
    p: &mut Packet,
    srh: &SegmentRoutingHeader,
    src: Ipv6Addr,
    hop_limit: u8,
) -> Result<(), SrError> {
    srh.validate()?;
    check_growth(p, IPV6_HEADER_LEN + srh.encoded_len())?;
    encapsulate(p, srh.clone(), src, hop_limit)
}

fn check_growth(p: &Packet, extra: usize) -> Result<(), SrError> {
    if p.encoded_len() + extra - IPV6_HEADER_LEN > u16::MAX as usize {
        Err(SrError::TooLarge)
    } else {
        Ok(())
    }
}

fn insert_srh(p: &mut Packet, srh: SegmentRoutingHeader, active: Ipv6Addr) {
    let layer = &mut p.layers[0];
    layer.srhs.insert(0, srh);
    layer.ip.dst = active;
    p.refresh_lengths();
}

fn encapsulate(
    p: &mut Packet,
    srh: SegmentRoutingHeader,
    src: Ipv6Addr,
    hop_limit: u8,
) -> Result<(), SrError> {
    let active = srh.active_segment().ok_or(SrError::NoSrh)?;
    let inner = p.outer();
    let ip = Ipv6Header {
        traffic_class: inner.traffic_class,
        flow_label: inner.flow_label,
        payload_length: 0,
        next_header: 0,
        hop_limit,
        src,
        dst: active,
    };
    p.layers.insert(0, Layer::with_srh(ip, srh));
    p.refresh_lengths();
    Ok(())
}
