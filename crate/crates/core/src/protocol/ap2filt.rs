//! Application-to-filter messages and the discover/attach handshake.
//!
//! Each message type is identified by a registration name; a message on the
//! wire is that name plus two integer parameters.

use super::ProtocolError;

pub const REGISTRATION_SUFFIX: &str = "4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";

pub const DISCOVER_NAME: &str = "MulticamDiscover4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";
pub const ATTACH_NAME: &str = "MulticamAttach4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";
pub const ADVANCE_NAME: &str = "MulticamAdvance4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";
pub const KICK_NAME: &str = "MulticamKick4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";
pub const PING_NAME: &str = "MulticamPing4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";
pub const PONG_NAME: &str = "MulticamPong4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";
pub const RESET_NAME: &str = "MulticamReset4AD2E57A-AF70-42AE-9A64-BC88F995B9C8";

/// All registration names, in the order they are conventionally listed.
pub const REGISTRATION_NAMES: [&str; 7] = [
    DISCOVER_NAME,
    ATTACH_NAME,
    ADVANCE_NAME,
    KICK_NAME,
    PING_NAME,
    PONG_NAME,
    RESET_NAME,
];

/// Opaque handle of a message endpoint (a hidden window on the original
/// platform).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ap2FiltMessage {
    Discover { filter: Endpoint, num_cams: u32 },
    Attach { app: Endpoint },
    Kick,
    Ping,
    Pong,
    AdvanceCamera,
    Reset,
}

impl Ap2FiltMessage {
    pub fn registration_name(&self) -> &'static str {
        match self {
            Ap2FiltMessage::Discover { .. } => DISCOVER_NAME,
            Ap2FiltMessage::Attach { .. } => ATTACH_NAME,
            Ap2FiltMessage::Kick => KICK_NAME,
            Ap2FiltMessage::Ping => PING_NAME,
            Ap2FiltMessage::Pong => PONG_NAME,
            Ap2FiltMessage::AdvanceCamera => ADVANCE_NAME,
            Ap2FiltMessage::Reset => RESET_NAME,
        }
    }
}

/// A message as transmitted: registration name plus the two parameters
/// (`wParam`, `lParam` on the original platform).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WireRecord {
    pub registration_name: String,
    pub param_a: u64,
    pub param_b: i64,
}

pub fn encode_ap2filt(msg: &Ap2FiltMessage) -> WireRecord {
    let (param_a, param_b) = match *msg {
        Ap2FiltMessage::Discover { filter, num_cams } => (filter.0, num_cams as i64),
        Ap2FiltMessage::Attach { app } => (app.0, 0),
        _ => (0, 0),
    };
    WireRecord {
        registration_name: msg.registration_name().to_string(),
        param_a,
        param_b,
    }
}

/// Parameters of message types that do not use them are ignored.
pub fn decode_ap2filt(record: &WireRecord) -> Result<Ap2FiltMessage, ProtocolError> {
    let msg = match record.registration_name.as_str() {
        DISCOVER_NAME => Ap2FiltMessage::Discover {
            filter: Endpoint(record.param_a),
            num_cams: u32::try_from(record.param_b)
                .map_err(|_| ProtocolError::Malformed(format!("camera count {}", record.param_b)))?,
        },
        ATTACH_NAME => Ap2FiltMessage::Attach {
            app: Endpoint(record.param_a),
        },
        KICK_NAME => Ap2FiltMessage::Kick,
        PING_NAME => Ap2FiltMessage::Ping,
        PONG_NAME => Ap2FiltMessage::Pong,
        ADVANCE_NAME => Ap2FiltMessage::AdvanceCamera,
        RESET_NAME => Ap2FiltMessage::Reset,
        other => return Err(ProtocolError::UnknownRegistrationName(other.to_string())),
    };
    Ok(msg)
}

/// Filter side: which application, if any, it reports to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttachState {
    #[default]
    Unattached,
    Attached(Endpoint),
}

/// Application side: which filter, if any, it controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BindState {
    #[default]
    Unbound,
    Bound {
        filter: Endpoint,
        num_cams: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeEvent {
    FilterCreated,
    AppStarted,
    Received(Ap2FiltMessage),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Broadcast,
    To(Endpoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Destination,
    pub msg: Ap2FiltMessage,
}

impl Outgoing {
    fn broadcast(msg: Ap2FiltMessage) -> Self {
        Self {
            to: Destination::Broadcast,
            msg,
        }
    }

    fn to(ep: Endpoint, msg: Ap2FiltMessage) -> Self {
        Self {
            to: Destination::To(ep),
            msg,
        }
    }
}

/// Work the filter's owner must carry out after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterEffect {
    AdvanceCamera,
    /// Stop, re-enumerate cameras, restart, then feed `FilterCreated` again.
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step<S, E> {
    pub state: S,
    pub emit: Vec<Outgoing>,
    pub effect: Option<E>,
}

impl<S, E> Step<S, E> {
    fn new(state: S) -> Self {
        Self {
            state,
            emit: Vec::new(),
            effect: None,
        }
    }

    fn emit(mut self, out: Outgoing) -> Self {
        self.emit.push(out);
        self
    }

    fn effect(mut self, effect: E) -> Self {
        self.effect = Some(effect);
        self
    }
}

/// One filter-side transition. `own` is the filter's endpoint and
/// `num_cams` its current camera count.
pub fn filter_step(
    state: AttachState,
    own: Endpoint,
    num_cams: u32,
    event: HandshakeEvent,
) -> Step<AttachState, FilterEffect> {
    let discover = Outgoing::broadcast(Ap2FiltMessage::Discover { filter: own, num_cams });
    match event {
        HandshakeEvent::FilterCreated | HandshakeEvent::Received(Ap2FiltMessage::Kick) => {
            Step::new(state).emit(discover)
        }
        // last attach wins
        HandshakeEvent::Received(Ap2FiltMessage::Attach { app }) => Step::new(AttachState::Attached(app)),
        HandshakeEvent::Received(Ap2FiltMessage::Ping) => match state {
            AttachState::Attached(app) => Step::new(state).emit(Outgoing::to(app, Ap2FiltMessage::Pong)),
            AttachState::Unattached => Step::new(state),
        },
        HandshakeEvent::Received(Ap2FiltMessage::AdvanceCamera) => Step::new(state).effect(FilterEffect::AdvanceCamera),
        HandshakeEvent::Received(Ap2FiltMessage::Reset) => Step::new(state).effect(FilterEffect::Reset),
        HandshakeEvent::AppStarted
        | HandshakeEvent::Received(Ap2FiltMessage::Discover { .. } | Ap2FiltMessage::Pong) => Step::new(state),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppEffect {
    FilterAlive,
}

/// One application-side transition. `own` is the application's endpoint.
pub fn app_step(state: BindState, own: Endpoint, event: HandshakeEvent) -> Step<BindState, AppEffect> {
    match event {
        HandshakeEvent::AppStarted => Step::new(state).emit(Outgoing::broadcast(Ap2FiltMessage::Kick)),
        HandshakeEvent::Received(Ap2FiltMessage::Discover { filter, num_cams }) => {
            Step::new(BindState::Bound { filter, num_cams })
                .emit(Outgoing::to(filter, Ap2FiltMessage::Attach { app: own }))
        }
        HandshakeEvent::Received(Ap2FiltMessage::Pong) => Step::new(state).effect(AppEffect::FilterAlive),
        HandshakeEvent::FilterCreated | HandshakeEvent::Received(_) => Step::new(state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    const FILTER: Endpoint = Endpoint(0x1001);
    const APP: Endpoint = Endpoint(0x2001);

    #[test]
    fn registration_names_are_exact() {
        let expected = [
            "MulticamDiscover4AD2E57A-AF70-42AE-9A64-BC88F995B9C8",
            "MulticamAttach4AD2E57A-AF70-42AE-9A64-BC88F995B9C8",
            "MulticamAdvance4AD2E57A-AF70-42AE-9A64-BC88F995B9C8",
            "MulticamKick4AD2E57A-AF70-42AE-9A64-BC88F995B9C8",
            "MulticamPing4AD2E57A-AF70-42AE-9A64-BC88F995B9C8",
            "MulticamPong4AD2E57A-AF70-42AE-9A64-BC88F995B9C8",
            "MulticamReset4AD2E57A-AF70-42AE-9A64-BC88F995B9C8",
        ];
        assert_eq!(REGISTRATION_NAMES, expected);
        assert!(REGISTRATION_NAMES.iter().all(|n| n.ends_with(REGISTRATION_SUFFIX)));
    }

    #[test]
    fn codec_examples() {
        let rec = encode_ap2filt(&Ap2FiltMessage::Discover {
            filter: Endpoint(42),
            num_cams: 3,
        });
        assert_eq!(
            rec,
            WireRecord {
                registration_name: DISCOVER_NAME.into(),
                param_a: 42,
                param_b: 3
            }
        );
        let kick = WireRecord {
            registration_name: KICK_NAME.into(),
            param_a: 0xdead,
            param_b: -7,
        };
        assert_eq!(decode_ap2filt(&kick), Ok(Ap2FiltMessage::Kick));
        let unknown = WireRecord {
            registration_name: "MulticamJump".into(),
            param_a: 0,
            param_b: 0,
        };
        assert!(matches!(
            decode_ap2filt(&unknown),
            Err(ProtocolError::UnknownRegistrationName(_))
        ));
        let negative = WireRecord {
            registration_name: DISCOVER_NAME.into(),
            param_a: 1,
            param_b: -1,
        };
        assert!(matches!(decode_ap2filt(&negative), Err(ProtocolError::Malformed(_))));
    }

    #[test]
    fn handshake_examples() {
        let s = filter_step(AttachState::Unattached, FILTER, 3, HandshakeEvent::FilterCreated);
        assert_eq!(s.state, AttachState::Unattached);
        assert_eq!(
            s.emit,
            vec![Outgoing::broadcast(Ap2FiltMessage::Discover {
                filter: FILTER,
                num_cams: 3
            })]
        );

        let s = app_step(
            BindState::Unbound,
            APP,
            HandshakeEvent::Received(Ap2FiltMessage::Discover {
                filter: FILTER,
                num_cams: 3,
            }),
        );
        assert_eq!(
            s.state,
            BindState::Bound {
                filter: FILTER,
                num_cams: 3
            }
        );
        assert_eq!(s.emit, vec![Outgoing::to(FILTER, Ap2FiltMessage::Attach { app: APP })]);

        let s = filter_step(
            AttachState::Attached(APP),
            FILTER,
            3,
            HandshakeEvent::Received(Ap2FiltMessage::Kick),
        );
        assert_eq!(s.state, AttachState::Attached(APP));
        assert_eq!(
            s.emit,
            vec![Outgoing::broadcast(Ap2FiltMessage::Discover {
                filter: FILTER,
                num_cams: 3
            })]
        );
    }

    #[test]
    fn filter_answers_ping_and_reports_effects() {
        let attached = AttachState::Attached(APP);
        let s = filter_step(attached, FILTER, 2, HandshakeEvent::Received(Ap2FiltMessage::Ping));
        assert_eq!(s.emit, vec![Outgoing::to(APP, Ap2FiltMessage::Pong)]);
        let s = filter_step(
            AttachState::Unattached,
            FILTER,
            2,
            HandshakeEvent::Received(Ap2FiltMessage::Ping),
        );
        assert!(s.emit.is_empty());
        let s = filter_step(
            attached,
            FILTER,
            2,
            HandshakeEvent::Received(Ap2FiltMessage::AdvanceCamera),
        );
        assert_eq!(s.effect, Some(FilterEffect::AdvanceCamera));
        let s = filter_step(attached, FILTER, 2, HandshakeEvent::Received(Ap2FiltMessage::Reset));
        assert_eq!(s.effect, Some(FilterEffect::Reset));
        let other = Endpoint(0x3001);
        let s = filter_step(
            attached,
            FILTER,
            2,
            HandshakeEvent::Received(Ap2FiltMessage::Attach { app: other }),
        );
        assert_eq!(s.state, AttachState::Attached(other));
        let s = app_step(BindState::Unbound, APP, HandshakeEvent::Received(Ap2FiltMessage::Pong));
        assert_eq!(s.effect, Some(AppEffect::FilterAlive));
        let s = app_step(BindState::Unbound, APP, HandshakeEvent::AppStarted);
        assert_eq!(s.emit, vec![Outgoing::broadcast(Ap2FiltMessage::Kick)]);
    }

    /// Runs both lifecycle events in the given order over a broadcast bus
    /// that goes through the wire codec, returning the number of message
    /// deliveries until both sides have finished the handshake.
    fn run_handshake(filter_first: bool) -> (AttachState, BindState, usize) {
        let mut filter = AttachState::Unattached;
        let mut app = BindState::Unbound;
        let mut filter_alive = false;
        let mut app_alive = false;
        let mut bus: VecDeque<(Endpoint, Destination, WireRecord)> = VecDeque::new();
        let mut deliveries = 0;
        let order = if filter_first {
            [HandshakeEvent::FilterCreated, HandshakeEvent::AppStarted]
        } else {
            [HandshakeEvent::AppStarted, HandshakeEvent::FilterCreated]
        };
        for lifecycle in order {
            match lifecycle {
                HandshakeEvent::FilterCreated => {
                    filter_alive = true;
                    let s = filter_step(filter, FILTER, 2, lifecycle);
                    filter = s.state;
                    bus.extend(s.emit.into_iter().map(|o| (FILTER, o.to, encode_ap2filt(&o.msg))));
                }
                _ => {
                    app_alive = true;
                    let s = app_step(app, APP, lifecycle);
                    app = s.state;
                    bus.extend(s.emit.into_iter().map(|o| (APP, o.to, encode_ap2filt(&o.msg))));
                }
            }
            while let Some((from, to, rec)) = bus.pop_front() {
                let msg = decode_ap2filt(&rec).unwrap();
                let ev = HandshakeEvent::Received(msg);
                let to_filter =
                    filter_alive && from != FILTER && matches!(to, Destination::Broadcast | Destination::To(FILTER));
                let to_app = app_alive && from != APP && matches!(to, Destination::Broadcast | Destination::To(APP));
                if to_filter {
                    deliveries += 1;
                    let s = filter_step(filter, FILTER, 2, ev);
                    filter = s.state;
                    bus.extend(s.emit.into_iter().map(|o| (FILTER, o.to, encode_ap2filt(&o.msg))));
                }
                if to_app {
                    deliveries += 1;
                    let s = app_step(app, APP, ev);
                    app = s.state;
                    bus.extend(s.emit.into_iter().map(|o| (APP, o.to, encode_ap2filt(&o.msg))));
                }
            }
        }
        (filter, app, deliveries)
    }

    #[test]
    fn handshake_completes_in_either_order() {
        // app first: Discover, Attach
        let (f, a, n) = run_handshake(false);
        assert_eq!(f, AttachState::Attached(APP));
        assert_eq!(
            a,
            BindState::Bound {
                filter: FILTER,
                num_cams: 2
            }
        );
        assert_eq!(n, 2);
        // filter first: the Discover is lost, so the app's Kick restarts it:
        // Kick, Discover, Attach
        let (f, a, n) = run_handshake(true);
        assert_eq!(f, AttachState::Attached(APP));
        assert_eq!(
            a,
            BindState::Bound {
                filter: FILTER,
                num_cams: 2
            }
        );
        assert_eq!(n, 3);
    }

    fn arb_msg() -> impl Strategy<Value = Ap2FiltMessage> {
        prop_oneof![
            (any::<u64>(), any::<u32>()).prop_map(|(e, n)| Ap2FiltMessage::Discover {
                filter: Endpoint(e),
                num_cams: n
            }),
            any::<u64>().prop_map(|e| Ap2FiltMessage::Attach { app: Endpoint(e) }),
            Just(Ap2FiltMessage::Kick),
            Just(Ap2FiltMessage::Ping),
            Just(Ap2FiltMessage::Pong),
            Just(Ap2FiltMessage::AdvanceCamera),
            Just(Ap2FiltMessage::Reset),
        ]
    }

    proptest! {
        #[test]
        fn wire_round_trip(msg in arb_msg()) {
            prop_assert_eq!(decode_ap2filt(&encode_ap2filt(&msg)).unwrap(), msg);
        }
    }
}
