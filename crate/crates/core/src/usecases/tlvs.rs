//! TLVs carried by measurement and OAM probes.
//!
//! Type codes 1 (DM) and 2 (controller) are local experimental values, not
//! IANA assignments.

use std::net::Ipv6Addr;

use crate::packet::tlv::{encode_padded, Tlv};
use crate::packet::SegmentRoutingHeader;

pub const TLV_DM: u8 = 1;
pub const TLV_CONTROLLER: u8 = 2;
pub const DM_TLV_LEN: usize = 8;
pub const CONTROLLER_TLV_LEN: usize = 18;

/// Where a measurement or OAM reply should be sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Controller {
    pub addr: Ipv6Addr,
    pub port: u16,
}

impl Controller {
    pub fn new(addr: Ipv6Addr, port: u16) -> Self {
        Controller { addr, port }
    }

    pub fn to_bytes(self) -> [u8; CONTROLLER_TLV_LEN] {
        let mut b = [0; CONTROLLER_TLV_LEN];
        b[..16].copy_from_slice(&self.addr.octets());
        b[16..].copy_from_slice(&self.port.to_be_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != CONTROLLER_TLV_LEN {
            return None;
        }
        let addr: [u8; 16] = b[..16].try_into().ok()?;
        Some(Controller {
            addr: Ipv6Addr::from(addr),
            port: u16::from_be_bytes([b[16], b[17]]),
        })
    }
}

pub fn dm_tlv(tx_ns: u64) -> Tlv {
    Tlv::new(TLV_DM, tx_ns.to_be_bytes().to_vec())
}

pub fn controller_tlv(c: Controller) -> Tlv {
    Tlv::new(TLV_CONTROLLER, c.to_bytes().to_vec())
}

/// DM TLV, controller TLV and padding: 32 octets.
pub fn dm_probe_tlvs(tx_ns: u64, controller: Controller) -> Vec<u8> {
    encode_padded(&[dm_tlv(tx_ns), controller_tlv(controller)])
}

/// Transmit timestamp of a well-formed DM TLV.
pub fn read_dm(srh: &SegmentRoutingHeader) -> Option<u64> {
    let v = srh.find_tlv(TLV_DM)?;
    Some(u64::from_be_bytes(v.try_into().ok()?))
}

pub fn read_controller(srh: &SegmentRoutingHeader) -> Option<Controller> {
    Controller::from_bytes(srh.find_tlv(TLV_CONTROLLER)?)
}
