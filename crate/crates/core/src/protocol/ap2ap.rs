//! Application-to-application messages carried by the host chat program.
//!
//! Messages are UTF-8 strings; the host program wraps them in an
//! `ALTER APPLICATION <connection> WRITE <stream> <payload>` command.

use std::fmt;
use std::str::FromStr;

use super::ap2filt::Ap2FiltMessage;
use super::ProtocolError;

pub const PING: &str = "AP2AP_PING";
pub const PONG: &str = "AP2AP_PONG";
pub const ASK_NUMCAMS: &str = "AP2AP_ASK_NUMCAMS";
pub const REPLY_NUMCAMS: &str = "AP2AP_REPLY_NUMCAMS";
pub const ASK_VERSION: &str = "AP2AP_ASK_VERSION";
pub const REPLY_VERSION: &str = "AP2AP_REPLY_VERSION";
pub const ADVANCE_CAMERA: &str = "AP2AP_ADVANCE_CAMERA";

/// Connection name used by the application.
pub const DEFAULT_CONNECTION: &str = "multicam";

pub const PROTOCOL_VERSION: ProtocolVersion = ProtocolVersion { major: 1, minor: 1 };
pub const APP_VERSION: AppVersion = AppVersion([0, 1, 0, 8]);

fn parse_digit(s: &str) -> Option<u8> {
    match s.as_bytes() {
        [d @ b'0'..=b'9'] => Some(d - b'0'),
        _ => None,
    }
}

/// `d.d`, one decimal digit per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProtocolVersion {
    major: u8,
    minor: u8,
}

impl ProtocolVersion {
    pub fn new(major: u8, minor: u8) -> Result<Self, ProtocolError> {
        if major > 9 || minor > 9 {
            return Err(ProtocolError::Malformed(format!("version {major}.{minor}")));
        }
        Ok(Self { major, minor })
    }
}

impl fmt::Display for ProtocolVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)
    }
}

impl FromStr for ProtocolVersion {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ProtocolError::Malformed(format!("protocol version `{s}`"));
        let (a, b) = s.split_once('.').ok_or_else(bad)?;
        Ok(Self {
            major: parse_digit(a).ok_or_else(bad)?,
            minor: parse_digit(b).ok_or_else(bad)?,
        })
    }
}

/// `d.d.d.d`, one decimal digit per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AppVersion([u8; 4]);

impl AppVersion {
    pub fn new(parts: [u8; 4]) -> Result<Self, ProtocolError> {
        if parts.iter().any(|&d| d > 9) {
            return Err(ProtocolError::Malformed(format!("version {parts:?}")));
        }
        Ok(Self(parts))
    }
}

impl fmt::Display for AppVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

impl FromStr for AppVersion {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ProtocolError::Malformed(format!("application version `{s}`"));
        let mut parts = [0u8; 4];
        let mut it = s.split('.');
        for p in &mut parts {
            *p = it.next().and_then(parse_digit).ok_or_else(bad)?;
        }
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(Self(parts))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ap2ApMessage {
    Ping,
    Pong,
    AskNumCams,
    /// Physical camera count, 0 when the local filter is unavailable.
    ReplyNumCams(u32),
    AskVersion,
    ReplyVersion {
        protocol: ProtocolVersion,
        app: AppVersion,
    },
    AdvanceCamera,
}

impl Ap2ApMessage {
    pub fn current_version() -> Self {
        Ap2ApMessage::ReplyVersion {
            protocol: PROTOCOL_VERSION,
            app: APP_VERSION,
        }
    }
}

impl fmt::Display for Ap2ApMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ap2ApMessage::Ping => f.write_str(PING),
            Ap2ApMessage::Pong => f.write_str(PONG),
            Ap2ApMessage::AskNumCams => f.write_str(ASK_NUMCAMS),
            Ap2ApMessage::ReplyNumCams(n) => write!(f, "{REPLY_NUMCAMS} {n}"),
            Ap2ApMessage::AskVersion => f.write_str(ASK_VERSION),
            Ap2ApMessage::ReplyVersion { protocol, app } => {
                write!(f, "{REPLY_VERSION} {protocol} {app}")
            }
            Ap2ApMessage::AdvanceCamera => f.write_str(ADVANCE_CAMERA),
        }
    }
}

/// Canonical decimal: digits only, no sign, no leading zeros.
fn parse_count(s: &str) -> Option<u32> {
    let canonical = !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'));
    canonical.then(|| s.parse().ok()).flatten()
}

impl FromStr for Ap2ApMessage {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || ProtocolError::Malformed(s.to_string());
        let msg = match s {
            PING => Ap2ApMessage::Ping,
            PONG => Ap2ApMessage::Pong,
            ASK_NUMCAMS => Ap2ApMessage::AskNumCams,
            ASK_VERSION => Ap2ApMessage::AskVersion,
            ADVANCE_CAMERA => Ap2ApMessage::AdvanceCamera,
            _ => {
                let (head, rest) = s.split_once(' ').ok_or_else(malformed)?;
                match head {
                    REPLY_NUMCAMS => Ap2ApMessage::ReplyNumCams(parse_count(rest).ok_or_else(malformed)?),
                    REPLY_VERSION => {
                        let (p, a) = rest.split_once(' ').ok_or_else(malformed)?;
                        Ap2ApMessage::ReplyVersion {
                            protocol: p.parse().map_err(|_| malformed())?,
                            app: a.parse().map_err(|_| malformed())?,
                        }
                    }
                    _ => return Err(malformed()),
                }
            }
        };
        Ok(msg)
    }
}

pub fn encode_ap2ap(msg: &Ap2ApMessage) -> String {
    msg.to_string()
}

pub fn decode_ap2ap(s: &str) -> Result<Ap2ApMessage, ProtocolError> {
    s.parse()
}

/// A host-chat API command carrying an application payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HostCommand {
    pub connection: String,
    pub stream: String,
    pub payload: String,
}

fn valid_field(s: &str) -> bool {
    !s.is_empty() && !s.contains(' ')
}

/// `ALTER APPLICATION <connection> WRITE <stream> <payload>`
pub fn wrap_host_command(connection: &str, stream: &str, payload: &str) -> Result<String, ProtocolError> {
    if !valid_field(connection) || !valid_field(stream) {
        return Err(ProtocolError::MalformedCommand(format!(
            "connection `{connection}` / stream `{stream}`"
        )));
    }
    Ok(format!("ALTER APPLICATION {connection} WRITE {stream} {payload}"))
}

/// Splits off the fixed fields; the payload is everything after the fifth
/// space, verbatim.
pub fn unwrap_host_command(command: &str) -> Result<HostCommand, ProtocolError> {
    let malformed = || ProtocolError::MalformedCommand(command.to_string());
    let mut parts = command.splitn(6, ' ');
    let mut next = || parts.next().ok_or_else(malformed);
    let (alter, application, connection, write, stream, payload) =
        (next()?, next()?, next()?, next()?, next()?, next()?);
    if alter != "ALTER" || application != "APPLICATION" || write != "WRITE" {
        return Err(malformed());
    }
    if !valid_field(connection) || !valid_field(stream) {
        return Err(malformed());
    }
    Ok(HostCommand {
        connection: connection.to_string(),
        stream: stream.to_string(),
        payload: payload.to_string(),
    })
}

/// What the local application knows when a message arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppContext {
    /// Camera count of the attached local filter, `None` when no filter is
    /// attached.
    pub filter_cams: Option<u32>,
}

/// Facts learned about the remote application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteObservation {
    Alive,
    NumCams(u32),
    Version { protocol: ProtocolVersion, app: AppVersion },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppAction {
    SendAp2Ap(Ap2ApMessage),
    SendAp2Filt(Ap2FiltMessage),
    Record(RemoteObservation),
}

/// Application-side response to an incoming Ap2Ap message.
pub fn handle_ap2ap(msg: &Ap2ApMessage, ctx: &AppContext) -> Vec<AppAction> {
    match *msg {
        Ap2ApMessage::Ping => vec![AppAction::SendAp2Ap(Ap2ApMessage::Pong)],
        Ap2ApMessage::AskNumCams => vec![AppAction::SendAp2Ap(Ap2ApMessage::ReplyNumCams(
            ctx.filter_cams.unwrap_or(0),
        ))],
        Ap2ApMessage::AskVersion => vec![AppAction::SendAp2Ap(Ap2ApMessage::current_version())],
        Ap2ApMessage::AdvanceCamera => match ctx.filter_cams {
            Some(_) => vec![AppAction::SendAp2Filt(Ap2FiltMessage::AdvanceCamera)],
            None => vec![],
        },
        Ap2ApMessage::Pong => vec![AppAction::Record(RemoteObservation::Alive)],
        Ap2ApMessage::ReplyNumCams(n) => vec![AppAction::Record(RemoteObservation::NumCams(n))],
        Ap2ApMessage::ReplyVersion { protocol, app } => {
            vec![AppAction::Record(RemoteObservation::Version { protocol, app })]
        }
    }
}
