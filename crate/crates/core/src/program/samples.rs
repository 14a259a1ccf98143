//! Small programs used by the benchmarks and tests.

use crate::ids::TableId;
use crate::packet::OFFSET_TAG;

use super::{Action, Program, ProgramContext, ProgramOutcome};

/// Does nothing; the endpoint hook alone behaves like End.
#[derive(Debug, Clone, Copy, Default)]
pub struct Noop;

impl Program for Noop {
    fn name(&self) -> &str {
        "noop"
    }

    fn run(&self, _ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        ProgramOutcome::Ok
    }
}

/// Looks the next segment up in a fixed table, like End.T.
#[derive(Debug, Clone, Copy)]
pub struct EndTProgram {
    pub table: TableId,
}

impl Program for EndTProgram {
    fn name(&self) -> &str {
        "end_t"
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        match ctx.action(Action::EndT(self.table)) {
            Ok(()) => ProgramOutcome::Redirect,
            Err(_) => ProgramOutcome::Drop,
        }
    }
}

/// Increments the SRH tag.
#[derive(Debug, Clone, Copy, Default)]
pub struct TagIncrement;

impl Program for TagIncrement {
    fn name(&self) -> &str {
        "tag_increment"
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        let Some(srh) = ctx.srh() else {
            return ProgramOutcome::Drop;
        };
        let tag = srh.tag.wrapping_add(1);
        match ctx.store_bytes(OFFSET_TAG, &tag.to_be_bytes()) {
            Ok(()) => ProgramOutcome::Ok,
            Err(_) => ProgramOutcome::Drop,
        }
    }
}

/// Adds an 8-octet TLV at the start of the TLV region.
#[derive(Debug, Clone, Copy)]
pub struct AddTlv {
    pub tlv_type: u8,
    pub value: [u8; 6],
}

impl Default for AddTlv {
    fn default() -> Self {
        AddTlv {
            tlv_type: 0x80,
            value: [0; 6],
        }
    }
}

impl Program for AddTlv {
    fn name(&self) -> &str {
        "add_tlv"
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        if ctx.adjust_srh(8).is_err() {
            return ProgramOutcome::Drop;
        }
        let Some(offset) = ctx.srh().map(|s| s.tlv_offset()) else {
            return ProgramOutcome::Drop;
        };
        let mut tlv = [0u8; 8];
        tlv[0] = self.tlv_type;
        tlv[1] = 6;
        tlv[2..].copy_from_slice(&self.value);
        match ctx.store_bytes(offset, &tlv) {
            Ok(()) => ProgramOutcome::Ok,
            Err(_) => ProgramOutcome::Drop,
        }
    }
}
