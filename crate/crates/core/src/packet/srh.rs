use std::net::Ipv6Addr;

use super::tlv::{self, TlvRef};
use super::{SrhViolation, NEXT_HEADER_NONE, ROUTING_TYPE_SRH};

/// Octets before the segment list: next header, hdr ext len, routing type,
/// segments left, last entry, flags, tag.
pub const SRH_FIXED_LEN: usize = 8;

pub const OFFSET_SEGMENTS_LEFT: usize = 3;
pub const OFFSET_LAST_ENTRY: usize = 4;
pub const OFFSET_FLAGS: usize = 5;
pub const OFFSET_TAG: usize = 6;

/// IPv6 Segment Routing Header (routing type 4).
///
/// Segments are stored in reverse path order: `segments[0]` is the final
/// segment and the active segment is `segments[segments_left]`.
/// `hdr_ext_len` and `last_entry` are kept as plain fields so that
/// malformed headers can be represented and rejected by [`validate`](Self::validate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRoutingHeader {
    pub next_header: u8,
    pub hdr_ext_len: u8,
    pub routing_type: u8,
    pub segments_left: u8,
    pub last_entry: u8,
    pub flags: u8,
    pub tag: u16,
    pub segments: Vec<Ipv6Addr>,
    pub tlv_bytes: Vec<u8>,
}

impl SegmentRoutingHeader {
    /// Builds a header from a reversed segment list.
    pub fn new(segments: Vec<Ipv6Addr>, segments_left: u8) -> Self {
        let mut srh = SegmentRoutingHeader {
            next_header: NEXT_HEADER_NONE,
            hdr_ext_len: 0,
            routing_type: ROUTING_TYPE_SRH,
            segments_left,
            last_entry: 0,
            flags: 0,
            tag: 0,
            segments,
            tlv_bytes: Vec::new(),
        };
        srh.sync_lengths();
        srh
    }

    /// Builds a header from segments in travel order; the first one is active.
    pub fn from_path(path: &[Ipv6Addr]) -> Self {
        let segments: Vec<_> = path.iter().rev().copied().collect();
        let left = segments.len().saturating_sub(1) as u8;
        Self::new(segments, left)
    }

    pub fn with_tlvs(mut self, tlv_bytes: Vec<u8>) -> Self {
        self.tlv_bytes = tlv_bytes;
        self.sync_lengths();
        self
    }

    pub fn with_tag(mut self, tag: u16) -> Self {
        self.tag = tag;
        self
    }

    /// Recomputes `last_entry` and `hdr_ext_len` from the segment list and
    /// TLV region. Values that do not fit saturate and fail validation.
    pub fn sync_lengths(&mut self) {
        self.last_entry = self.segments.len().saturating_sub(1).min(255) as u8;
        self.hdr_ext_len = (self.encoded_len() / 8).saturating_sub(1).min(255) as u8;
    }

    pub fn encoded_len(&self) -> usize {
        SRH_FIXED_LEN + 16 * self.segments.len() + self.tlv_bytes.len()
    }

    /// Offset of the TLV region from the start of the header.
    pub fn tlv_offset(&self) -> usize {
        SRH_FIXED_LEN + 16 * self.segments.len()
    }

    pub fn active_segment(&self) -> Option<Ipv6Addr> {
        self.segments.get(self.segments_left as usize).copied()
    }

    pub fn final_segment(&self) -> Option<Ipv6Addr> {
        self.segments.first().copied()
    }

    /// Segments in travel order.
    pub fn path(&self) -> Vec<Ipv6Addr> {
        self.segments.iter().rev().copied().collect()
    }

    pub fn tlvs(&self) -> Result<Vec<TlvRef<'_>>, SrhViolation> {
        tlv::walk(&self.tlv_bytes).map_err(|v| v.shifted(self.tlv_offset()))
    }

    pub fn find_tlv(&self, tlv_type: u8) -> Option<&[u8]> {
        tlv::find(&self.tlv_bytes, tlv_type)
    }

    /// Checks every header invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), SrhViolation> {
        if self.routing_type != ROUTING_TYPE_SRH {
            return Err(SrhViolation::BadRoutingType(self.routing_type));
        }
        if self.segments.is_empty() {
            return Err(SrhViolation::EmptySegmentList);
        }
        if self.segments.len() != self.last_entry as usize + 1 {
            return Err(SrhViolation::LastEntryMismatch {
                last_entry: self.last_entry,
                segments: self.segments.len(),
            });
        }
        if self.segments_left > self.last_entry {
            return Err(SrhViolation::SegmentsLeftOutOfRange {
                segments_left: self.segments_left,
                last_entry: self.last_entry,
            });
        }
        let len = self.encoded_len();
        if len % 8 != 0 {
            return Err(SrhViolation::TlvMisaligned {
                tlv_len: self.tlv_bytes.len(),
            });
        }
        if len > 8 * 256 {
            return Err(SrhViolation::SizeOverflow { octets: len });
        }
        if len != 8 * (self.hdr_ext_len as usize + 1) {
            return Err(SrhViolation::LengthMismatch {
                hdr_ext_len: self.hdr_ext_len,
                actual: len,
            });
        }
        self.tlvs().map(|_| ())
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&[
            self.next_header,
            self.hdr_ext_len,
            self.routing_type,
            self.segments_left,
            self.last_entry,
            self.flags,
        ]);
        out.extend_from_slice(&self.tag.to_be_bytes());
        for s in &self.segments {
            out.extend_from_slice(&s.octets());
        }
        out.extend_from_slice(&self.tlv_bytes);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }
}

/// Validates an SRH. Never panics; returns the first violation found.
pub fn validate_srh(srh: &SegmentRoutingHeader) -> Result<(), SrhViolation> {
    srh.validate()
}
