//! C ABI over the multicam session simulator and protocol codecs.
//!
//! Every fallible function returns an [`McStatus`]; on failure a message is
//! kept per thread and can be read with [`mc_last_error`]. Sessions are
//! opaque [`McSession`] handles owned by the caller and released with
//! [`mc_session_free`]. Panics never cross the boundary; they come back as
//! [`McStatus::Panic`].
//!
//! Byte-producing functions follow one pattern: they write at most `cap`
//! bytes to `buf`, always store the full size in `*needed`, and return
//! [`McStatus::BufferTooSmall`] when `cap` is short. Passing a null `buf`
//! with `cap == 0` is the way to ask for the size.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use multicam::bench::{bandwidth_estimate, MIB};
use multicam::protocol::ap2ap::{Ap2ApMessage, APP_VERSION, PROTOCOL_VERSION};
use multicam::protocol::{decode_ap2ap, encode_ap2ap, wrap_host_command, AdvanceTarget};
use multicam::session::{PeerId, Session, SessionConfig, SessionError};
use multicam::sources::Capability;
use multicam::switching::{advance, ViewState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Protocol = 5,
    NoFrame = 6,
    BufferTooSmall = 7,
    WrongClockMode = 8,
    /// The request has no path to a pipeline (no application running).
    NoControlPath = 9,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McPeer {
    A = 0,
    B = 1,
}

impl From<McPeer> for PeerId {
    fn from(p: McPeer) -> Self {
        match p {
            McPeer::A => PeerId::A,
            McPeer::B => PeerId::B,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McTarget {
    Local = 0,
    Remote = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMessageKind {
    Ping = 0,
    Pong = 1,
    AskNumCams = 2,
    ReplyNumCams = 3,
    AskVersion = 4,
    ReplyVersion = 5,
    AdvanceCamera = 6,
}

/// A view: `primary` is the 1-based camera ordinal, or 0 for the tiled view.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct McViewState {
    pub primary: u32,
    pub num_cams: u32,
}

/// Size of a peer's current output frame; `bytes` is `width * height * 3`
/// (packed RGB24, rows top to bottom).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct McFrameInfo {
    pub width: u32,
    pub height: u32,
    pub bytes: usize,
    pub seq: u64,
    pub timestamp_us: u64,
}

/// Opaque session handle.
pub struct McSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: McStatus, msg: impl Into<String>) -> McStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> McStatus) -> McStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(McStatus::Panic, "internal panic"),
    }
}

fn session_status(e: SessionError) -> McStatus {
    let status = match e {
        SessionError::Config(_) => McStatus::Config,
        SessionError::UnknownPeer(_) => McStatus::InvalidArgument,
        SessionError::NoFrameYet(_) => McStatus::NoFrame,
        SessionError::WrongClockMode(_) => McStatus::WrongClockMode,
    };
    fail(status, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, McStatus> {
    if p.is_null() {
        return Err(fail(McStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(McStatus::InvalidUtf8, "string is not UTF-8"))
}

unsafe fn session_mut<'a>(s: *mut McSession) -> Result<&'a mut Session, McStatus> {
    s.as_mut()
        .map(|s| &mut s.inner)
        .ok_or_else(|| fail(McStatus::NullPointer, "null session"))
}

unsafe fn session_ref<'a>(s: *const McSession) -> Result<&'a Session, McStatus> {
    s.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| fail(McStatus::NullPointer, "null session"))
}

/// Copies `bytes` out under the buffer contract described at the top.
unsafe fn write_out(bytes: &[u8], buf: *mut u8, cap: usize, needed: *mut usize) -> McStatus {
    if !needed.is_null() {
        *needed = bytes.len();
    }
    if cap < bytes.len() {
        return fail(
            McStatus::BufferTooSmall,
            format!("need {} bytes, have {cap}", bytes.len()),
        );
    }
    if buf.is_null() {
        return fail(McStatus::NullPointer, "null buffer");
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
    McStatus::Ok
}

/// Like `write_out` for text, adding a terminating NUL.
unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> McStatus {
    let mut bytes = Vec::with_capacity(s.len() + 1);
    bytes.extend_from_slice(s.as_bytes());
    bytes.push(0);
    write_out(&bytes, buf.cast(), cap, needed)
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failure on this thread; empty if none. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn mc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default two-peer session on the virtual clock.
#[no_mangle]
pub unsafe extern "C" fn mc_session_new_default(out: *mut *mut McSession) -> McStatus {
    guard(|| {
        if out.is_null() {
            return fail(McStatus::NullPointer, "null out pointer");
        }
        let s = tri!(Session::new(SessionConfig::default()).map_err(session_status));
        *out = Box::into_raw(Box::new(McSession { inner: s }));
        McStatus::Ok
    })
}

/// Session from a TOML config document.
#[no_mangle]
pub unsafe extern "C" fn mc_session_from_toml(toml: *const c_char, out: *mut *mut McSession) -> McStatus {
    guard(|| {
        if out.is_null() {
            return fail(McStatus::NullPointer, "null out pointer");
        }
        let text = tri!(str_arg(toml));
        let cfg = tri!(SessionConfig::from_toml_str(text).map_err(session_status));
        let s = tri!(Session::new(cfg).map_err(session_status));
        *out = Box::into_raw(Box::new(McSession { inner: s }));
        McStatus::Ok
    })
}

/// Releases a session; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mc_session_free(s: *mut McSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Advances the virtual clock by `dt_us` microseconds.
#[no_mangle]
pub unsafe extern "C" fn mc_session_step(s: *mut McSession, dt_us: u64) -> McStatus {
    guard(|| {
        let s = tri!(session_mut(s));
        tri!(s.step(dt_us).map_err(session_status));
        McStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn mc_session_now_us(s: *const McSession, out: *mut u64) -> McStatus {
    guard(|| {
        let s = tri!(session_ref(s));
        if out.is_null() {
            return fail(McStatus::NullPointer, "null out pointer");
        }
        *out = s.now_us();
        McStatus::Ok
    })
}

/// An advance request by `actor`'s user. Returns `NoControlPath` without
/// changing anything if the request cannot reach a pipeline.
#[no_mangle]
pub unsafe extern "C" fn mc_session_request_advance(s: *mut McSession, actor: McPeer, target: McTarget) -> McStatus {
    guard(|| {
        let s = tri!(session_mut(s));
        let (actor, target) = (
            PeerId::from(actor),
            match target {
                McTarget::Local => AdvanceTarget::Local,
                McTarget::Remote => AdvanceTarget::Remote,
            },
        );
        if !s.can_advance(actor, target) {
            return fail(McStatus::NoControlPath, format!("no control path for peer {actor}"));
        }
        s.request_advance(actor, target);
        McStatus::Ok
    })
}

/// Sends an instant message from `from` to the other peer.
#[no_mangle]
pub unsafe extern "C" fn mc_session_deliver_im(s: *mut McSession, from: McPeer, text: *const c_char) -> McStatus {
    guard(|| {
        let s = tri!(session_mut(s));
        let text = tri!(str_arg(text));
        s.deliver_im(from.into(), text);
        McStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn mc_session_view_state(s: *const McSession, peer: McPeer, out: *mut McViewState) -> McStatus {
    guard(|| {
        let s = tri!(session_ref(s));
        if out.is_null() {
            return fail(McStatus::NullPointer, "null out pointer");
        }
        let id = PeerId::from(peer);
        *out = McViewState {
            primary: s.view_state(id).primary().unwrap_or(0),
            num_cams: s.num_cams(id),
        };
        McStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn mc_session_frame_info(s: *const McSession, peer: McPeer, out: *mut McFrameInfo) -> McStatus {
    guard(|| {
        let s = tri!(session_ref(s));
        if out.is_null() {
            return fail(McStatus::NullPointer, "null out pointer");
        }
        let f = tri!(s.current_view(peer.into()).map_err(session_status));
        *out = McFrameInfo {
            width: f.width(),
            height: f.height(),
            bytes: f.pixels().len(),
            seq: f.seq,
            timestamp_us: f.timestamp_us,
        };
        McStatus::Ok
    })
}

/// Copies the peer's current output frame (packed RGB24) into `buf`.
#[no_mangle]
pub unsafe extern "C" fn mc_session_copy_frame(
    s: *const McSession,
    peer: McPeer,
    buf: *mut u8,
    cap: usize,
    needed: *mut usize,
) -> McStatus {
    guard(|| {
        let s = tri!(session_ref(s));
        let f = tri!(s.current_view(peer.into()).map_err(session_status));
        write_out(f.pixels(), buf, cap, needed)
    })
}

/// Encodes an application-to-application message. `num_cams` is used by
/// `ReplyNumCams` only; `ReplyVersion` carries this library's versions.
#[no_mangle]
pub unsafe extern "C" fn mc_ap2ap_encode(
    kind: McMessageKind,
    num_cams: u32,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> McStatus {
    guard(|| {
        let msg = match kind {
            McMessageKind::Ping => Ap2ApMessage::Ping,
            McMessageKind::Pong => Ap2ApMessage::Pong,
            McMessageKind::AskNumCams => Ap2ApMessage::AskNumCams,
            McMessageKind::ReplyNumCams => Ap2ApMessage::ReplyNumCams(num_cams),
            McMessageKind::AskVersion => Ap2ApMessage::AskVersion,
            McMessageKind::ReplyVersion => Ap2ApMessage::ReplyVersion {
                protocol: PROTOCOL_VERSION,
                app: APP_VERSION,
            },
            McMessageKind::AdvanceCamera => Ap2ApMessage::AdvanceCamera,
        };
        write_str(&encode_ap2ap(&msg), buf, cap, needed)
    })
}

/// Decodes an application-to-application message. `num_cams` receives the
/// count of a `ReplyNumCams` and is set to 0 otherwise; may be null.
#[no_mangle]
pub unsafe extern "C" fn mc_ap2ap_decode(
    text: *const c_char,
    kind: *mut McMessageKind,
    num_cams: *mut u32,
) -> McStatus {
    guard(|| {
        let text = tri!(str_arg(text));
        if kind.is_null() {
            return fail(McStatus::NullPointer, "null out pointer");
        }
        let msg = tri!(decode_ap2ap(text).map_err(|e| fail(McStatus::Protocol, e.to_string())));
        let (k, n) = match msg {
            Ap2ApMessage::Ping => (McMessageKind::Ping, 0),
            Ap2ApMessage::Pong => (McMessageKind::Pong, 0),
            Ap2ApMessage::AskNumCams => (McMessageKind::AskNumCams, 0),
            Ap2ApMessage::ReplyNumCams(n) => (McMessageKind::ReplyNumCams, n),
            Ap2ApMessage::AskVersion => (McMessageKind::AskVersion, 0),
            Ap2ApMessage::ReplyVersion { .. } => (McMessageKind::ReplyVersion, 0),
            Ap2ApMessage::AdvanceCamera => (McMessageKind::AdvanceCamera, 0),
        };
        *kind = k;
        if !num_cams.is_null() {
            *num_cams = n;
        }
        McStatus::Ok
    })
}

/// `ALTER APPLICATION <connection> WRITE <stream> <payload>`, NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mc_wrap_host_command(
    connection: *const c_char,
    stream: *const c_char,
    payload: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> McStatus {
    guard(|| {
        let (c, s, p) = (tri!(str_arg(connection)), tri!(str_arg(stream)), tri!(str_arg(payload)));
        let cmd = tri!(wrap_host_command(c, s, p).map_err(|e| fail(McStatus::Protocol, e.to_string())));
        write_str(&cmd, buf, cap, needed)
    })
}

/// Next view in the advance cycle. `primary` is 0 for tiled.
#[no_mangle]
pub unsafe extern "C" fn mc_advance(primary: u32, num_cams: u32, tiled_enabled: bool, out: *mut u32) -> McStatus {
    guard(|| {
        if out.is_null() {
            return fail(McStatus::NullPointer, "null out pointer");
        }
        let state = if primary == 0 {
            ViewState::Tiled
        } else {
            ViewState::Primary(primary)
        };
        if num_cams == 0 || !state.is_valid_for(num_cams) || (state == ViewState::Tiled && !tiled_enabled) {
            return fail(
                McStatus::InvalidArgument,
                format!("state {primary} is not valid for {num_cams} cameras"),
            );
        }
        *out = advance(state, num_cams, tiled_enabled).primary().unwrap_or(0);
        McStatus::Ok
    })
}

/// Raw RGB24 data rate of one camera in MiB per second; negative if the
/// arguments do not describe a camera mode.
#[no_mangle]
pub extern "C" fn mc_bandwidth_mib_per_s(width: u32, height: u32, fps: f64) -> f64 {
    let res = match multicam::frame::Resolution::new(width, height) {
        Ok(r) => r,
        Err(_) => return -1.0,
    };
    match Capability::new(res, multicam::sources::PixelFormat::Rgb24, fps) {
        Ok(cap) => bandwidth_estimate(&cap) / MIB,
        Err(_) => -1.0,
    }
}
