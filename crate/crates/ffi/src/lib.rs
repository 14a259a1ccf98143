//! C ABI over the packet codec and the simulator.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `_free` function. Every call returns an
//! [`Srv6Status`]; on failure [`srv6_last_error`] describes the cause for
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use srv6sim::packet::{decode_packet, encode_packet, udp_checksum, PacketError, ParseReason};
use srv6sim::scenario::{build_simulation, Scenario, ScenarioConfig};
use srv6sim::Packet;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Srv6Status {
    Ok = 0,
    NullPointer = -1,
    ParseError = -2,
    InvalidSrh = -3,
    NoTransport = -4,
    BufferTooSmall = -5,
    ConfigError = -6,
    IoError = -7,
    InvalidUtf8 = -8,
    Panic = -9,
}

/// A decoded IPv6 packet.
pub struct Srv6Packet {
    inner: Packet,
}

/// A simulation built from a JSON scenario.
pub struct Srv6Simulation {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl ToString) {
    let c = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: Srv6Status, msg: impl ToString) -> Srv6Status {
    set_error(msg);
    status
}

fn packet_status(e: &PacketError) -> Srv6Status {
    match e {
        PacketError::Parse {
            reason: ParseReason::InvalidSrh(_),
            ..
        }
        | PacketError::InvariantViolation(_) => Srv6Status::InvalidSrh,
        PacketError::Parse { .. } => Srv6Status::ParseError,
        PacketError::NoTransport => Srv6Status::NoTransport,
    }
}

fn guard(f: impl FnOnce() -> Srv6Status) -> Srv6Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == Srv6Status::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(Srv6Status::Panic, "internal panic"),
    }
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn srv6_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Decodes `len` octets at `buf` into a new packet handle.
///
/// # Safety
/// `buf` must point to `len` readable octets and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srv6_packet_decode(buf: *const u8, len: usize, out: *mut *mut Srv6Packet) -> Srv6Status {
    guard(|| {
        if buf.is_null() || out.is_null() {
            return fail(Srv6Status::NullPointer, "null argument");
        }
        let bytes = std::slice::from_raw_parts(buf, len);
        match decode_packet(bytes) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(Srv6Packet { inner: p }));
                Srv6Status::Ok
            }
            Err(e) => {
                *out = ptr::null_mut();
                fail(packet_status(&e), e)
            }
        }
    })
}

/// Encodes `packet` into `buf`. `out_len` receives the encoded length,
/// also when the buffer is too small.
///
/// # Safety
/// `packet` must come from [`srv6_packet_decode`]; `buf` must point to
/// `cap` writable octets (it may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn srv6_packet_encode(
    packet: *const Srv6Packet,
    buf: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> Srv6Status {
    guard(|| {
        if packet.is_null() || out_len.is_null() {
            return fail(Srv6Status::NullPointer, "null argument");
        }
        let bytes = match encode_packet(&(*packet).inner) {
            Ok(b) => b,
            Err(e) => return fail(packet_status(&e), e),
        };
        *out_len = bytes.len();
        if bytes.len() > cap || buf.is_null() {
            return fail(
                Srv6Status::BufferTooSmall,
                format!("need {} octets, have {cap}", bytes.len()),
            );
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Srv6Status::Ok
    })
}

/// Checks every SRH and the length fields of `packet`.
///
/// # Safety
/// `packet` must come from [`srv6_packet_decode`].
#[no_mangle]
pub unsafe extern "C" fn srv6_packet_validate(packet: *const Srv6Packet) -> Srv6Status {
    guard(|| {
        if packet.is_null() {
            return fail(Srv6Status::NullPointer, "null argument");
        }
        let p = &(*packet).inner;
        if let Err(v) = p.validate_srhs() {
            return fail(Srv6Status::InvalidSrh, v);
        }
        match p.check() {
            Ok(()) => Srv6Status::Ok,
            Err(e) => fail(packet_status(&e), e),
        }
    })
}

/// UDP checksum over the pseudo-header the packet's final destination
/// implies.
///
/// # Safety
/// `packet` must come from [`srv6_packet_decode`] and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn srv6_packet_udp_checksum(packet: *const Srv6Packet, out: *mut u16) -> Srv6Status {
    guard(|| {
        if packet.is_null() || out.is_null() {
            return fail(Srv6Status::NullPointer, "null argument");
        }
        match udp_checksum(&(*packet).inner) {
            Ok(c) => {
                *out = c;
                Srv6Status::Ok
            }
            Err(e) => fail(packet_status(&e), e),
        }
    })
}

/// Segments left of the outermost SRH, or -1 without one.
///
/// # Safety
/// `packet` must come from [`srv6_packet_decode`].
#[no_mangle]
pub unsafe extern "C" fn srv6_packet_segments_left(packet: *const Srv6Packet) -> i32 {
    if packet.is_null() {
        return -1;
    }
    (*packet).inner.outer_srh().map_or(-1, |s| i32::from(s.segments_left))
}

/// # Safety
/// `packet` must come from [`srv6_packet_decode`] or be null, and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srv6_packet_free(packet: *mut Srv6Packet) {
    if !packet.is_null() {
        drop(Box::from_raw(packet));
    }
}

/// Builds a simulation from a NUL-terminated JSON scenario.
///
/// # Safety
/// `json` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srv6_sim_from_json(json: *const c_char, out: *mut *mut Srv6Simulation) -> Srv6Status {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(Srv6Status::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(Srv6Status::InvalidUtf8, e),
        };
        let built = ScenarioConfig::from_json_str(text).and_then(|c| build_simulation(&c));
        match built {
            Ok(s) => {
                *out = Box::into_raw(Box::new(Srv6Simulation { inner: s }));
                Srv6Status::Ok
            }
            Err(e) => fail(Srv6Status::ConfigError, e),
        }
    })
}

/// Advances the simulation clock to `t_ns`.
///
/// # Safety
/// `sim` must come from [`srv6_sim_from_json`].
#[no_mangle]
pub unsafe extern "C" fn srv6_sim_run_until(sim: *mut Srv6Simulation, t_ns: u64) -> Srv6Status {
    guard(|| {
        if sim.is_null() {
            return fail(Srv6Status::NullPointer, "null argument");
        }
        (*sim).inner.sim.run_until(t_ns);
        Srv6Status::Ok
    })
}

/// Current simulation time in nanoseconds, or 0 for a null handle.
///
/// # Safety
/// `sim` must come from [`srv6_sim_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn srv6_sim_now(sim: *const Srv6Simulation) -> u64 {
    if sim.is_null() {
        return 0;
    }
    (*sim).inner.sim.now()
}

/// Writes the trace collected so far as TSV to `path`.
///
/// # Safety
/// `sim` must come from [`srv6_sim_from_json`] and `path` be a valid C
/// string.
#[no_mangle]
pub unsafe extern "C" fn srv6_sim_write_trace(sim: *const Srv6Simulation, path: *const c_char) -> Srv6Status {
    guard(|| {
        if sim.is_null() || path.is_null() {
            return fail(Srv6Status::NullPointer, "null argument");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(e) => return fail(Srv6Status::InvalidUtf8, e),
        };
        let res = File::create(path).and_then(|f| {
            let mut w = BufWriter::new(f);
            (*sim).inner.sim.write_trace(&mut w)?;
            w.flush()
        });
        match res {
            Ok(()) => Srv6Status::Ok,
            Err(e) => fail(Srv6Status::IoError, format!("{path}: {e}")),
        }
    })
}

/// # Safety
/// `sim` must come from [`srv6_sim_from_json`] or be null, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srv6_sim_free(sim: *mut Srv6Simulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
