//! SRH TLV records.
//!
//! A TLV region is a sequence of `(type:1, length:1, value:length)` records,
//! except Pad1 (type 0) which is a single octet. Runs of padding longer than
//! one octet must use PadN; a run of two or more Pad1 octets is treated as
//! unfilled raw space and rejected.

use super::SrhViolation;

pub const TLV_PAD1: u8 = 0;
pub const TLV_PADN: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tlv {
    pub tlv_type: u8,
    pub value: Vec<u8>,
}

impl Tlv {
    pub fn new(tlv_type: u8, value: impl Into<Vec<u8>>) -> Self {
        Tlv {
            tlv_type,
            value: value.into(),
        }
    }

    pub fn pad1() -> Self {
        Tlv::new(TLV_PAD1, Vec::new())
    }

    /// PadN covering `total` octets including its two header octets.
    pub fn padn(total: usize) -> Self {
        assert!((2..=257).contains(&total), "PadN spans 2..=257 octets");
        Tlv::new(TLV_PADN, vec![0; total - 2])
    }

    pub fn is_pad1(&self) -> bool {
        self.tlv_type == TLV_PAD1
    }

    pub fn encoded_len(&self) -> usize {
        if self.is_pad1() {
            1
        } else {
            2 + self.value.len()
        }
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.push(self.tlv_type);
        if !self.is_pad1() {
            debug_assert!(self.value.len() <= u8::MAX as usize);
            out.push(self.value.len() as u8);
            out.extend_from_slice(&self.value);
        }
    }
}

/// One record found while walking a TLV region, borrowed from the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TlvRef<'a> {
    /// Offset of the type octet inside the region.
    pub offset: usize,
    pub tlv_type: u8,
    pub value: &'a [u8],
}

/// Walks `region`, returning every record or the first violation. Offsets
/// in violations are relative to the start of the region.
pub fn walk(region: &[u8]) -> Result<Vec<TlvRef<'_>>, SrhViolation> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < region.len() {
        let tlv_type = region[pos];
        if tlv_type == TLV_PAD1 {
            if region.get(pos + 1) == Some(&TLV_PAD1) {
                return Err(SrhViolation::RawFillInvalid { offset: pos });
            }
            out.push(TlvRef {
                offset: pos,
                tlv_type,
                value: &[],
            });
            pos += 1;
            continue;
        }
        let Some(&len) = region.get(pos + 1) else {
            return Err(SrhViolation::TlvOverrun { offset: pos });
        };
        let end = pos + 2 + len as usize;
        if end > region.len() {
            return Err(SrhViolation::TlvOverrun { offset: pos });
        }
        out.push(TlvRef {
            offset: pos,
            tlv_type,
            value: &region[pos + 2..end],
        });
        pos = end;
    }
    Ok(out)
}

/// Finds the first record of `tlv_type` in a region that walks cleanly.
pub fn find(region: &[u8], tlv_type: u8) -> Option<&[u8]> {
    walk(region)
        .ok()?
        .into_iter()
        .find(|t| t.tlv_type == tlv_type)
        .map(|t| t.value)
}

/// Serializes `tlvs` and pads the result to a multiple of 8 octets.
pub fn encode_padded(tlvs: &[Tlv]) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tlvs {
        t.write_to(&mut out);
    }
    pad_to_8(&mut out);
    out
}

/// Appends Pad1 or PadN so that `region.len()` is a multiple of 8.
pub fn pad_to_8(region: &mut Vec<u8>) {
    match (8 - region.len() % 8) % 8 {
        0 => {}
        1 => Tlv::pad1().write_to(region),
        n => Tlv::padn(n).write_to(region),
    }
}
