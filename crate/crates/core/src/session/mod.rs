//! Two-peer chat simulation.
//!
//! Each peer runs a camera pipeline (the filter side) and optionally the
//! switching application. The applications talk to their own filter over a
//! local message bus and to each other through the host chat program, which
//! is modelled as a delayed FIFO link that also carries instant messages.

mod config;
mod link;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ClockMode, LinkConfig, PeerConfig, Peers, SessionConfig};
pub use link::{Link, LinkPayload};

use crate::frame::{Frame, Resolution};
use crate::protocol::ap2ap::DEFAULT_CONNECTION;
use crate::protocol::{
    app_step, decode_ap2ap, decode_ap2filt, encode_ap2ap, encode_ap2filt, filter_step, handle_ap2ap, handle_im,
    handle_key, unwrap_host_command, wrap_host_command, AdvanceTarget, Ap2ApMessage, Ap2FiltMessage, AppAction,
    AppContext, AttachState, BindState, Destination, Endpoint, FilterEffect, HandshakeEvent, ImAction, ImSettings, Key,
    Outgoing, RemoteObservation,
};
use crate::sources::build_registry;
use crate::switching::{Pipeline, ViewState};

const MS: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PeerId {
    A,
    B,
}

impl PeerId {
    pub const ALL: [PeerId; 2] = [PeerId::A, PeerId::B];

    pub fn other(self) -> PeerId {
        match self {
            PeerId::A => PeerId::B,
            PeerId::B => PeerId::A,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_byte(self) -> u8 {
        match self {
            PeerId::A => b'A',
            PeerId::B => b'B',
        }
    }

    pub fn from_byte(b: u8) -> Option<PeerId> {
        match b {
            b'A' => Some(PeerId::A),
            b'B' => Some(PeerId::B),
            _ => None,
        }
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeerId::A => "A",
            PeerId::B => "B",
        })
    }
}

impl FromStr for PeerId {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(PeerId::A),
            "B" | "b" => Ok(PeerId::B),
            _ => Err(SessionError::UnknownPeer(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("unknown peer {0:?}")]
    UnknownPeer(String),
    #[error("peer {0} has not emitted a frame yet")]
    NoFrameYet(PeerId),
    #[error("operation needs the {0:?} clock")]
    WrongClockMode(ClockMode),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    MessageSent {
        from: PeerId,
        to: PeerId,
        payload: LinkPayload,
        deliver_at_us: u64,
    },
    MessageDelivered {
        from: PeerId,
        to: PeerId,
        payload: LinkPayload,
    },
    StateChanged {
        peer: PeerId,
        old: ViewState,
        new: ViewState,
        /// First output instant showing the new view.
        effective_at_us: u64,
    },
    FrameEmitted {
        peer: PeerId,
        seq: u64,
    },
    Warning {
        peer: PeerId,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionEvent {
    pub at_us: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// What a peer's application has learned about the other side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RemoteInfo {
    /// Camera count reported by the remote application; `None` until it
    /// has replied, which is also how its presence is detected.
    pub num_cams: Option<u32>,
    pub alive: bool,
    pub version: Option<(crate::protocol::ProtocolVersion, crate::protocol::AppVersion)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Filter,
    App,
}

#[derive(Debug, Clone)]
pub struct Peer {
    id: PeerId,
    user: String,
    config: PeerConfig,
    pipeline: Pipeline,
    filter_endpoint: Endpoint,
    app_endpoint: Endpoint,
    attach: AttachState,
    bind: BindState,
    app_running: bool,
    remote: RemoteInfo,
}

impl Peer {
    pub fn id(&self) -> PeerId {
        self.id
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    pub fn has_app(&self) -> bool {
        self.config.has_app
    }

    pub fn im_settings(&self) -> ImSettings {
        self.config.im
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn attach_state(&self) -> AttachState {
        self.attach
    }

    pub fn bind_state(&self) -> BindState {
        self.bind
    }

    pub fn remote(&self) -> RemoteInfo {
        self.remote
    }

    pub fn stream(&self) -> String {
        format!("{}:1", self.user)
    }

    fn endpoint(&self, side: Side) -> Endpoint {
        match side {
            Side::Filter => self.filter_endpoint,
            Side::App => self.app_endpoint,
        }
    }

    /// Camera count as seen by the application, if bound to the filter.
    fn filter_cams(&self) -> Option<u32> {
        match self.bind {
            BindState::Bound { num_cams, .. } if self.has_app() => Some(num_cams),
            _ => None,
        }
    }
}

/// Both peers, the link between them and the event log, on one clock.
#[derive(Debug, Clone)]
pub struct Session {
    clock: ClockMode,
    log_limit: Option<usize>,
    now_us: u64,
    peers: [Peer; 2],
    link: Link,
    log: VecDeque<SessionEvent>,
    fresh: Vec<SessionEvent>,
    wall_origin: Option<(Instant, u64)>,
}

fn build_peer(id: PeerId, cfg: &PeerConfig, rng: &mut ChaCha8Rng) -> Result<Peer, SessionError> {
    if cfg.cameras.is_empty() {
        return Err(SessionError::Config(format!("peer {id} has no cameras")));
    }
    let registry = build_registry(&cfg.cameras, cfg.target_height, &cfg.whitelist)
        .map_err(|e| SessionError::Config(format!("peer {id}: {e}")))?;
    let pipeline =
        Pipeline::new(registry, cfg.pipeline.clone()).map_err(|e| SessionError::Config(format!("peer {id}: {e}")))?;
    let filter_endpoint = Endpoint(rng.random::<u64>() | 1);
    let mut app_endpoint = Endpoint(rng.random::<u64>() | 1);
    if app_endpoint == filter_endpoint {
        app_endpoint.0 ^= 2;
    }
    Ok(Peer {
        id,
        user: cfg.user_name(id),
        config: cfg.clone(),
        pipeline,
        filter_endpoint,
        app_endpoint,
        attach: AttachState::Unattached,
        bind: BindState::Unbound,
        app_running: false,
        remote: RemoteInfo::default(),
    })
}

impl Session {
    /// Starts both pipelines, runs the local handshake on each peer, sends
    /// the unsolicited camera counts and runs until the link is idle.
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a = build_peer(PeerId::A, &config.peers.a, &mut rng)?;
        let b = build_peer(PeerId::B, &config.peers.b, &mut rng)?;
        let mut session = Session {
            clock: config.clock,
            log_limit: config.log_limit,
            now_us: 0,
            peers: [a, b],
            link: Link::new(config.link.a_to_b_ms * MS, config.link.b_to_a_ms * MS),
            log: VecDeque::new(),
            fresh: Vec::new(),
            wall_origin: None,
        };
        for id in PeerId::ALL {
            session.peer_mut(id).pipeline.start(0);
            // the filter comes up with the video pipeline, the application
            // afterwards
            let created = filter_step(
                AttachState::Unattached,
                session.peer(id).filter_endpoint,
                session.num_cams(id),
                HandshakeEvent::FilterCreated,
            );
            session.peer_mut(id).attach = created.state;
            let mut outgoing: Vec<(Side, Outgoing)> = created.emit.into_iter().map(|o| (Side::Filter, o)).collect();
            session.run_local_bus(id, std::mem::take(&mut outgoing));
            if session.peer(id).has_app() {
                session.peer_mut(id).app_running = true;
                let started = app_step(
                    BindState::Unbound,
                    session.peer(id).app_endpoint,
                    HandshakeEvent::AppStarted,
                );
                session.peer_mut(id).bind = started.state;
                session.run_local_bus(id, started.emit.into_iter().map(|o| (Side::App, o)).collect());
            }
        }
        for id in PeerId::ALL {
            if let Some(n) = session.peer(id).filter_cams() {
                session.send_ap2ap(id, Ap2ApMessage::ReplyNumCams(n));
            }
        }
        while let Some((t, _)) = session.link.next_delivery() {
            session.advance_to(t);
        }
        session.fresh.clear();
        if session.clock == ClockMode::Wall {
            session.wall_origin = Some((Instant::now(), session.now_us));
        }
        Ok(session)
    }

    pub fn clock_mode(&self) -> ClockMode {
        self.clock
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn peer(&self, id: PeerId) -> &Peer {
        &self.peers[id.index()]
    }

    fn peer_mut(&mut self, id: PeerId) -> &mut Peer {
        &mut self.peers[id.index()]
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn num_cams(&self, id: PeerId) -> u32 {
        self.peer(id).pipeline.num_cams()
    }

    pub fn view_state(&self, id: PeerId) -> ViewState {
        self.peer(id).pipeline.state()
    }

    /// Every event so far (bounded by the configured log limit).
    pub fn events(&self) -> impl Iterator<Item = &SessionEvent> {
        self.log.iter()
    }

    /// Latest composed output of the peer: what the other side receives.
    pub fn current_view(&self, id: PeerId) -> Result<&Frame, SessionError> {
        self.peer(id)
            .pipeline
            .latest_output()
            .ok_or(SessionError::NoFrameYet(id))
    }

    /// The peer's own preview: its current view scaled to `height` rows.
    pub fn local_view(&self, id: PeerId, height: u32) -> Result<Frame, SessionError> {
        let frame = self.current_view(id)?;
        let width = (u64::from(frame.width()) * u64::from(height.max(1)) / u64::from(frame.height())).max(1);
        let res = Resolution::new(width as u32, height.max(1)).expect("non-zero preview size");
        Ok(frame.scale_nearest(res))
    }

    /// Advances the virtual clock by `dt_us` in deterministic mode.
    pub fn step(&mut self, dt_us: u64) -> Result<Vec<SessionEvent>, SessionError> {
        if self.clock != ClockMode::Deterministic {
            return Err(SessionError::WrongClockMode(ClockMode::Deterministic));
        }
        let target = self.now_us + dt_us;
        self.advance_to(target);
        Ok(std::mem::take(&mut self.fresh))
    }

    /// Catches the virtual clock up with wall time in wall-clock mode.
    pub fn sync_to_wall(&mut self) -> Result<Vec<SessionEvent>, SessionError> {
        let (origin, base) = self.wall_origin.ok_or(SessionError::WrongClockMode(ClockMode::Wall))?;
        let target = base + origin.elapsed().as_micros() as u64;
        self.advance_to(target.max(self.now_us));
        Ok(std::mem::take(&mut self.fresh))
    }

    fn sync(&mut self) {
        if self.wall_origin.is_some() {
            let _ = self.sync_to_wall();
        }
    }

    /// One advance request issued by `actor`'s user.
    pub fn request_advance(&mut self, actor: PeerId, target: AdvanceTarget) -> Vec<SessionEvent> {
        self.sync();
        if !self.peer(actor).has_app() {
            self.warn(actor, "no switching application running".into());
        } else {
            match target {
                AdvanceTarget::Local => self.app_advance_local(actor),
                AdvanceTarget::Remote => {
                    if self.peer(actor).remote.num_cams.is_some() {
                        self.send_ap2ap(actor, Ap2ApMessage::AdvanceCamera);
                    } else {
                        self.warn(actor, "remote peer has no switching application".into());
                    }
                }
            }
        }
        std::mem::take(&mut self.fresh)
    }

    /// Whether `request_advance(actor, target)` has a path to a pipeline.
    pub fn can_advance(&self, actor: PeerId, target: AdvanceTarget) -> bool {
        let p = self.peer(actor);
        p.has_app()
            && match target {
                AdvanceTarget::Local => true,
                AdvanceTarget::Remote => p.remote.num_cams.is_some(),
            }
    }

    /// Sends an instant message from `from` to the other peer.
    pub fn deliver_im(&mut self, from: PeerId, text: &str) -> Vec<SessionEvent> {
        self.sync();
        self.send_link(from, LinkPayload::Im(text.to_string()));
        std::mem::take(&mut self.fresh)
    }

    /// A key pressed by `actor`'s user while the chat window has focus.
    pub fn press_key(&mut self, actor: PeerId, key: Key) -> Vec<SessionEvent> {
        let settings = self.peer(actor).config.im;
        match handle_key(&settings, key) {
            Some(target) if self.peer(actor).has_app() => self.request_advance(actor, target),
            _ => Vec::new(),
        }
    }

    /// Asks `peer`'s filter to re-enumerate its cameras.
    pub fn request_reset(&mut self, peer: PeerId) -> Vec<SessionEvent> {
        self.sync();
        if let BindState::Bound { filter, .. } = self.peer(peer).bind {
            self.run_local_bus(
                peer,
                vec![(
                    Side::App,
                    Outgoing {
                        to: Destination::To(filter),
                        msg: Ap2FiltMessage::Reset,
                    },
                )],
            );
        } else {
            self.warn(peer, "application not bound to a filter".into());
        }
        std::mem::take(&mut self.fresh)
    }

    fn emit(&mut self, kind: EventKind) {
        let ev = SessionEvent {
            at_us: self.now_us,
            kind,
        };
        self.emit_event(ev);
    }

    fn emit_event(&mut self, ev: SessionEvent) {
        debug!("{} {:?}", ev.at_us, ev.kind);
        self.fresh.push(ev.clone());
        self.log.push_back(ev);
        if let Some(limit) = self.log_limit {
            while self.log.len() > limit {
                self.log.pop_front();
            }
        }
    }

    fn warn(&mut self, peer: PeerId, message: String) {
        warn!("peer {peer}: {message}");
        self.emit(EventKind::Warning { peer, message });
    }

    /// Processes deliveries and output frames in time order up to `target`.
    /// At equal times link deliveries go first, so a switch requested at `t`
    /// already shapes the frame at `t`.
    fn advance_to(&mut self, target: u64) {
        loop {
            let delivery = self.link.next_delivery().filter(|&(t, _)| t <= target);
            let frame = PeerId::ALL
                .into_iter()
                .filter_map(|p| self.peer(p).pipeline.next_output_at().map(|t| (t, p)))
                .filter(|&(t, _)| t <= target)
                .min();
            match (delivery, frame) {
                (Some((td, from)), f) if f.is_none_or(|(tf, _)| td <= tf) => {
                    self.now_us = self.now_us.max(td);
                    self.deliver(from);
                }
                (_, Some((tf, p))) => {
                    self.now_us = self.now_us.max(tf);
                    if let Some(out) = self.peer_mut(p).pipeline.frame_tick(tf) {
                        self.emit_event(SessionEvent {
                            at_us: out.timestamp_us.max(self.now_us),
                            kind: EventKind::FrameEmitted { peer: p, seq: out.seq },
                        });
                    }
                }
                _ => break,
            }
        }
        self.now_us = self.now_us.max(target);
    }

    fn send_link(&mut self, from: PeerId, payload: LinkPayload) {
        let deliver_at_us = self.link.send(from, self.now_us, payload.clone());
        self.emit(EventKind::MessageSent {
            from,
            to: from.other(),
            payload,
            deliver_at_us,
        });
    }

    fn send_ap2ap(&mut self, from: PeerId, msg: Ap2ApMessage) {
        let stream = self.peer(from.other()).stream();
        let cmd =
            wrap_host_command(DEFAULT_CONNECTION, &stream, &encode_ap2ap(&msg)).expect("user names contain no spaces");
        self.send_link(from, LinkPayload::Command(cmd));
    }

    fn deliver(&mut self, from: PeerId) {
        let Some((_, payload)) = self.link.pop(from) else {
            return;
        };
        let to = from.other();
        self.emit(EventKind::MessageDelivered {
            from,
            to,
            payload: payload.clone(),
        });
        match payload {
            LinkPayload::Im(text) => {
                for action in handle_im(&self.peer(to).config.im, &text) {
                    match action {
                        ImAction::AdvanceLocalCamera if self.peer(to).has_app() => self.app_advance_local(to),
                        ImAction::AdvanceLocalCamera => self.switch(to),
                    }
                }
            }
            LinkPayload::Command(cmd) => {
                if !self.peer(to).has_app() {
                    // nobody registered for the application stream
                    return;
                }
                let msg = unwrap_host_command(&cmd).and_then(|c| decode_ap2ap(&c.payload));
                match msg {
                    Ok(msg) => self.app_receive(to, msg),
                    Err(e) => self.warn(to, e.to_string()),
                }
            }
        }
    }

    fn app_receive(&mut self, id: PeerId, msg: Ap2ApMessage) {
        let ctx = AppContext {
            filter_cams: self.peer(id).filter_cams(),
        };
        for action in handle_ap2ap(&msg, &ctx) {
            match action {
                AppAction::SendAp2Ap(reply) => self.send_ap2ap(id, reply),
                AppAction::SendAp2Filt(m) => self.app_to_filter(id, m),
                AppAction::Record(obs) => {
                    let remote = &mut self.peer_mut(id).remote;
                    match obs {
                        RemoteObservation::Alive => remote.alive = true,
                        RemoteObservation::NumCams(n) => {
                            remote.alive = true;
                            remote.num_cams = Some(n);
                        }
                        RemoteObservation::Version { protocol, app } => {
                            remote.alive = true;
                            remote.version = Some((protocol, app));
                        }
                    }
                }
            }
        }
    }

    fn app_advance_local(&mut self, id: PeerId) {
        self.app_to_filter(id, Ap2FiltMessage::AdvanceCamera);
    }

    fn app_to_filter(&mut self, id: PeerId, msg: Ap2FiltMessage) {
        match self.peer(id).bind {
            BindState::Bound { filter, .. } => self.run_local_bus(
                id,
                vec![(
                    Side::App,
                    Outgoing {
                        to: Destination::To(filter),
                        msg,
                    },
                )],
            ),
            BindState::Unbound => self.warn(id, "application not bound to a filter".into()),
        }
    }

    /// Delivers local messages (and whatever they trigger) until quiet.
    /// Every message goes through the wire encoding.
    fn run_local_bus(&mut self, id: PeerId, initial: Vec<(Side, Outgoing)>) {
        let mut queue: VecDeque<(Side, Outgoing)> = initial.into();
        while let Some((sender, out)) = queue.pop_front() {
            let msg = match decode_ap2filt(&encode_ap2filt(&out.msg)) {
                Ok(m) => m,
                Err(e) => {
                    self.warn(id, e.to_string());
                    continue;
                }
            };
            let ev = HandshakeEvent::Received(msg);
            let receiver = match sender {
                Side::App => Side::Filter,
                Side::Filter => Side::App,
            };
            let peer = self.peer(id);
            let addressed = match out.to {
                Destination::Broadcast => true,
                Destination::To(ep) => ep == peer.endpoint(receiver),
            };
            if !addressed || (receiver == Side::App && !peer.app_running) {
                continue;
            }
            match receiver {
                Side::Filter => {
                    let step = filter_step(peer.attach, peer.filter_endpoint, peer.pipeline.num_cams(), ev);
                    self.peer_mut(id).attach = step.state;
                    queue.extend(step.emit.into_iter().map(|o| (Side::Filter, o)));
                    match step.effect {
                        Some(FilterEffect::AdvanceCamera) => self.switch(id),
                        Some(FilterEffect::Reset) => {
                            self.reset_filter(id);
                            let p = self.peer(id);
                            let again = filter_step(
                                p.attach,
                                p.filter_endpoint,
                                p.pipeline.num_cams(),
                                HandshakeEvent::FilterCreated,
                            );
                            self.peer_mut(id).attach = again.state;
                            queue.extend(again.emit.into_iter().map(|o| (Side::Filter, o)));
                        }
                        None => {}
                    }
                }
                Side::App => {
                    let step = app_step(peer.bind, peer.app_endpoint, ev);
                    self.peer_mut(id).bind = step.state;
                    queue.extend(step.emit.into_iter().map(|o| (Side::App, o)));
                }
            }
        }
    }

    fn switch(&mut self, id: PeerId) {
        let now = self.now_us;
        match self.peer_mut(id).pipeline.apply_switch(now) {
            Ok(outcome) if outcome.previous != outcome.new_state => self.emit(EventKind::StateChanged {
                peer: id,
                old: outcome.previous,
                new: outcome.new_state,
                effective_at_us: outcome.effective_at_us,
            }),
            Ok(_) => {}
            Err(e) => self.warn(id, e.to_string()),
        }
    }

    /// Re-enumerates the configured cameras and restarts the pipeline.
    fn reset_filter(&mut self, id: PeerId) {
        let now = self.now_us;
        let cfg = self.peer(id).config.clone();
        let registry = match build_registry(&cfg.cameras, cfg.target_height, &cfg.whitelist) {
            Ok(r) => r,
            Err(e) => return self.warn(id, e.to_string()),
        };
        let old = self.view_state(id);
        if let Err(e) = self.peer_mut(id).pipeline.rebuild(registry, now) {
            return self.warn(id, e.to_string());
        }
        let new = self.view_state(id);
        if old != new {
            let effective_at_us = self.peer(id).pipeline.next_output_at().unwrap_or(now);
            self.emit(EventKind::StateChanged {
                peer: id,
                old,
                new,
                effective_at_us,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::decode_provenance;
    use crate::switching::{advance, SwitchStrategy};
    use proptest::prelude::*;

    fn session(cfg: SessionConfig) -> Session {
        Session::new(cfg).unwrap()
    }

    fn state_changes(events: &[SessionEvent], peer: PeerId) -> Vec<(u64, ViewState, ViewState, u64)> {
        events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::StateChanged {
                    peer: p,
                    old,
                    new,
                    effective_at_us,
                } if p == peer => Some((e.at_us, old, new, effective_at_us)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn default_session_is_attached_and_knows_remote() {
        let s = session(SessionConfig::default());
        for id in PeerId::ALL {
            let p = s.peer(id);
            assert_eq!(p.attach_state(), AttachState::Attached(p.app_endpoint));
            assert_eq!(
                p.bind_state(),
                BindState::Bound {
                    filter: p.filter_endpoint,
                    num_cams: s.num_cams(id)
                }
            );
        }
        assert_eq!(s.peer(PeerId::A).remote().num_cams, Some(3));
        assert_eq!(s.peer(PeerId::B).remote().num_cams, Some(2));
        assert_eq!(s.now_us(), 25_000);
        assert_eq!(s.view_state(PeerId::A), ViewState::Primary(1));
    }

    #[test]
    fn zero_cameras_is_config_error() {
        let mut cfg = SessionConfig::default();
        cfg.peers.b.cameras.clear();
        assert!(matches!(Session::new(cfg), Err(SessionError::Config(_))));
    }

    #[test]
    fn local_advance_within_one_frame() {
        let mut s = session(SessionConfig::default());
        let t0 = s.now_us();
        let evs = s.request_advance(PeerId::A, AdvanceTarget::Local);
        let changes = state_changes(&evs, PeerId::A);
        assert_eq!(changes.len(), 1);
        let (at, old, new, eff) = changes[0];
        assert_eq!((at, old, new), (t0, ViewState::Primary(1), ViewState::Primary(2)));
        assert!(eff - t0 <= 33_334);
        s.step(100_000).unwrap();
        let prov = decode_provenance(s.current_view(PeerId::A).unwrap()).unwrap();
        assert_eq!(prov.view_key(), (2, 0));
    }

    #[test]
    fn remote_advance_takes_link_delay() {
        let mut s = session(SessionConfig::default());
        let t0 = s.now_us();
        s.request_advance(PeerId::A, AdvanceTarget::Remote);
        assert_eq!(s.view_state(PeerId::B), ViewState::Primary(1));
        let evs = s.step(24_999).unwrap();
        assert!(state_changes(&evs, PeerId::B).is_empty());
        let evs = s.step(1).unwrap();
        let changes = state_changes(&evs, PeerId::B);
        assert_eq!(changes.len(), 1);
        assert_eq!(changes[0].0, t0 + 25_000);
        assert_eq!(changes[0].2, ViewState::Primary(2));
        // delivery precedes the state change
        let delivered = evs
            .iter()
            .position(|e| matches!(e.kind, EventKind::MessageDelivered { to: PeerId::B, .. }));
        let changed = evs
            .iter()
            .position(|e| matches!(e.kind, EventKind::StateChanged { .. }));
        assert!(delivered.unwrap() < changed.unwrap());
    }

    #[test]
    fn remote_without_app_warns() {
        let mut cfg = SessionConfig::default();
        cfg.peers.b.has_app = false;
        let mut s = session(cfg);
        assert_eq!(s.peer(PeerId::A).remote().num_cams, None);
        let evs = s.request_advance(PeerId::A, AdvanceTarget::Remote);
        assert!(matches!(
            evs[..],
            [SessionEvent {
                kind: EventKind::Warning { peer: PeerId::A, .. },
                ..
            }]
        ));
        s.step(200_000).unwrap();
        assert_eq!(s.view_state(PeerId::B), ViewState::Primary(1));
        // B can still steer A through instant messages
        s.deliver_im(PeerId::B, "next please");
        s.step(30_000).unwrap();
        assert_eq!(s.view_state(PeerId::A), ViewState::Primary(2));
    }

    #[test]
    fn ims_advance_once_each_in_order() {
        let mut s = session(SessionConfig::default());
        s.deliver_im(PeerId::A, "hi");
        s.step(1_000).unwrap();
        s.deliver_im(PeerId::A, "there");
        let evs = s.step(100_000).unwrap();
        let changes = state_changes(&evs, PeerId::B);
        assert_eq!(
            changes.iter().map(|c| c.2).collect::<Vec<_>>(),
            vec![ViewState::Primary(2), ViewState::Primary(3)]
        );
    }

    #[test]
    fn im_switching_disabled() {
        let mut cfg = SessionConfig::default();
        cfg.peers.b.im.im_switch_enabled = false;
        let mut s = session(cfg);
        s.deliver_im(PeerId::A, "hi");
        let evs = s.step(100_000).unwrap();
        assert!(evs
            .iter()
            .any(|e| matches!(&e.kind, EventKind::MessageDelivered { payload: LinkPayload::Im(t), .. } if t == "hi")));
        assert!(state_changes(&evs, PeerId::B).is_empty());
    }

    #[test]
    fn keys_map_to_targets() {
        let mut s = session(SessionConfig::default());
        s.press_key(PeerId::A, Key::Enter);
        s.press_key(PeerId::A, Key::Space);
        s.step(50_000).unwrap();
        assert_eq!(s.view_state(PeerId::A), ViewState::Primary(2));
        assert_eq!(s.view_state(PeerId::B), ViewState::Primary(2));
    }

    #[test]
    fn step_zero_is_quiet() {
        let mut s = session(SessionConfig::default());
        s.step(10_000).unwrap();
        assert!(s.step(0).unwrap().is_empty());
    }

    #[test]
    fn cadence_and_no_frame_yet() {
        let mut cfg = SessionConfig::default();
        for c in &mut cfg.peers.b.cameras {
            c.warm_up_ms = 200;
        }
        let mut s = session(cfg);
        assert!(matches!(
            s.current_view(PeerId::B),
            Err(SessionError::NoFrameYet(PeerId::B))
        ));
        s.step(1_000_000 - 25_000).unwrap();
        let seq = s.current_view(PeerId::A).unwrap().seq;
        assert_eq!(seq, 30);
        assert!(s.current_view(PeerId::B).is_ok());
        let preview = s.local_view(PeerId::A, 128).unwrap();
        assert_eq!((preview.width(), preview.height()), (170, 128));
    }

    #[test]
    fn reset_rebuilds_and_reattaches() {
        let mut s = session(SessionConfig::default());
        s.request_advance(PeerId::B, AdvanceTarget::Local);
        assert_eq!(s.view_state(PeerId::B), ViewState::Primary(2));
        s.request_reset(PeerId::B);
        assert_eq!(s.view_state(PeerId::B), ViewState::Primary(1));
        let p = s.peer(PeerId::B);
        assert_eq!(p.attach_state(), AttachState::Attached(p.app_endpoint));
    }

    #[test]
    fn event_log_is_monotone_and_causal() {
        let mut s = session(SessionConfig::default());
        s.request_advance(PeerId::A, AdvanceTarget::Remote);
        s.deliver_im(PeerId::B, "x");
        s.step(500_000).unwrap();
        let evs: Vec<_> = s.events().cloned().collect();
        assert!(evs.windows(2).all(|w| w[0].at_us <= w[1].at_us));
        let sent = evs
            .iter()
            .filter(|e| matches!(e.kind, EventKind::MessageSent { .. }))
            .count();
        let delivered = evs
            .iter()
            .filter(|e| matches!(e.kind, EventKind::MessageDelivered { .. }))
            .count();
        assert_eq!(sent, delivered);
        for (i, e) in evs.iter().enumerate() {
            if let EventKind::MessageDelivered { from, payload, .. } = &e.kind {
                assert!(evs[..i].iter().any(|s| matches!(&s.kind, EventKind::MessageSent { from: f, payload: p, .. } if f == from && p == payload)));
            }
        }
    }

    #[test]
    fn one_at_a_time_remote_queues_mid_surgery() {
        let mut cfg = SessionConfig::default();
        cfg.peers.b.pipeline.strategy = SwitchStrategy::OneAtATime;
        for c in &mut cfg.peers.b.cameras {
            c.warm_up_ms = 500;
        }
        let mut s = session(cfg);
        s.request_advance(PeerId::A, AdvanceTarget::Remote);
        s.step(100_000).unwrap();
        s.request_advance(PeerId::A, AdvanceTarget::Remote);
        s.step(2_000_000).unwrap();
        let evs: Vec<_> = s.events().cloned().collect();
        let changes = state_changes(&evs, PeerId::B);
        assert_eq!(changes.len(), 2);
        // second surgery starts only when the first one has finished
        assert_eq!(changes[1].3 - changes[0].3, 550_000);
        assert_eq!(s.view_state(PeerId::B), ViewState::Primary(3));
    }

    #[test]
    fn wall_clock_mode_rejects_step() {
        let mut s = session(SessionConfig {
            clock: ClockMode::Wall,
            ..SessionConfig::default()
        });
        assert!(matches!(s.step(1), Err(SessionError::WrongClockMode(_))));
        assert!(s.sync_to_wall().is_ok());
    }

    fn run_script(seed: u64) -> (Vec<SessionEvent>, [u64; 2]) {
        let mut s = session(SessionConfig {
            seed,
            ..SessionConfig::default()
        });
        s.request_advance(PeerId::A, AdvanceTarget::Remote);
        s.step(40_000).unwrap();
        s.deliver_im(PeerId::B, "hello");
        s.request_advance(PeerId::B, AdvanceTarget::Local);
        s.step(300_000).unwrap();
        let hashes = PeerId::ALL.map(|p| s.current_view(p).unwrap().content_hash());
        (s.events().cloned().collect(), hashes)
    }

    #[test]
    fn deterministic_replay() {
        assert_eq!(run_script(7), run_script(7));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn k_remote_advances_match_advance_k(k in 0usize..=50, gap_ms in 1u64..40) {
            let mut s = session(SessionConfig::default());
            for _ in 0..k {
                s.request_advance(PeerId::A, AdvanceTarget::Remote);
                s.step(gap_ms * MS).unwrap();
            }
            s.step(100_000).unwrap();
            let mut expected = ViewState::Primary(1);
            for _ in 0..k {
                expected = advance(expected, 3, true);
            }
            prop_assert_eq!(s.view_state(PeerId::B), expected);
        }
    }
}
