//! Control protocols: application-to-application messages over the host
//! chat program, application-to-filter messages on the local machine, and
//! the instant-message and keystroke switching rules.

pub mod ap2ap;
pub mod ap2filt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ap2ap::{
    decode_ap2ap, encode_ap2ap, handle_ap2ap, unwrap_host_command, wrap_host_command, Ap2ApMessage, AppAction,
    AppContext, AppVersion, HostCommand, ProtocolVersion, RemoteObservation,
};
pub use ap2filt::{
    app_step, decode_ap2filt, encode_ap2filt, filter_step, Ap2FiltMessage, AttachState, BindState, Destination,
    Endpoint, FilterEffect, HandshakeEvent, Outgoing, WireRecord,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed message: {0:?}")]
    Malformed(String),
    #[error("malformed host command: {0:?}")]
    MalformedCommand(String),
    #[error("unknown registration name {0:?}")]
    UnknownRegistrationName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImSettings {
    /// Any received instant message advances the local camera.
    pub im_switch_enabled: bool,
    pub keystroke_switch_enabled: bool,
}

impl Default for ImSettings {
    fn default() -> Self {
        Self {
            im_switch_enabled: true,
            keystroke_switch_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImAction {
    AdvanceLocalCamera,
}

/// The message text is deliberately ignored.
pub fn handle_im(settings: &ImSettings, _text: &str) -> Vec<ImAction> {
    if settings.im_switch_enabled {
        vec![ImAction::AdvanceLocalCamera]
    } else {
        vec![]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvanceTarget {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Key {
    Enter,
    Space,
    Other(char),
}

/// Enter advances the local camera, Space the remote one.
pub fn handle_key(settings: &ImSettings, key: Key) -> Option<AdvanceTarget> {
    if !settings.keystroke_switch_enabled {
        return None;
    }
    match key {
        Key::Enter => Some(AdvanceTarget::Local),
        Key::Space => Some(AdvanceTarget::Remote),
        Key::Other(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im_hack() {
        let on = ImSettings::default();
        let off = ImSettings {
            im_switch_enabled: false,
            ..on
        };
        assert_eq!(handle_im(&on, "hello"), vec![ImAction::AdvanceLocalCamera]);
        assert_eq!(handle_im(&on, ""), vec![ImAction::AdvanceLocalCamera]);
        assert_eq!(handle_im(&off, "switch please"), vec![]);
    }

    #[test]
    fn keystrokes() {
        let on = ImSettings::default();
        assert_eq!(handle_key(&on, Key::Enter), Some(AdvanceTarget::Local));
        assert_eq!(handle_key(&on, Key::Space), Some(AdvanceTarget::Remote));
        assert_eq!(handle_key(&on, Key::Other('x')), None);
        let off = ImSettings {
            keystroke_switch_enabled: false,
            ..on
        };
        assert_eq!(handle_key(&off, Key::Enter), None);
    }
}
