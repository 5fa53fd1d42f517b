//! HTTP and WebSocket access to a live wall-clock session.
//!
//! All session access goes through one mutex, so commands and state reads
//! are applied in arrival order. A background ticker keeps the session's
//! clock in step with wall time and publishes the latest encoded frame of
//! each peer on a watch channel; every viewer socket reads from that
//! channel, so slow viewers skip frames instead of holding anything up.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{oneshot, watch};
use tokio::task::JoinHandle;

use crate::protocol::AdvanceTarget;
use crate::session::{ClockMode, PeerId, Session, SessionEvent};
use crate::wire::{camera_listing, encode_frame, StateMessage};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("the gateway needs a wall-clock session")]
    ClockMode,
    #[error("server: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewayOptions {
    /// Frames per second sent to each viewer.
    pub stream_fps: f64,
    /// How often the session clock is caught up with wall time.
    pub tick: Duration,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            stream_fps: 10.0,
            tick: Duration::from_millis(5),
        }
    }
}

type FrameFeed = watch::Receiver<Option<Bytes>>;

#[derive(Clone)]
struct AppState {
    session: Arc<Mutex<Session>>,
    feeds: [FrameFeed; 2],
}

impl AppState {
    /// Locks the session and brings its clock up to date.
    fn session(&self) -> MutexGuard<'_, Session> {
        let mut s = self.session.lock().unwrap_or_else(|e| e.into_inner());
        let _ = s.sync_to_wall();
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PeerInfo {
    pub peer: PeerId,
    pub user: String,
    pub has_app: bool,
    pub num_cams: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Accepted {
    pub accepted: bool,
    pub events: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

/// A peer path segment other than `A` or `B`.
struct UnknownPeer(String);

impl IntoResponse for UnknownPeer {
    fn into_response(self) -> Response {
        error(StatusCode::NOT_FOUND, format!("unknown peer {:?}", self.0))
    }
}

fn parse_peer(s: &str) -> Result<PeerId, UnknownPeer> {
    match s {
        "A" => Ok(PeerId::A),
        "B" => Ok(PeerId::B),
        _ => Err(UnknownPeer(s.to_string())),
    }
}

fn accepted(events: &[SessionEvent]) -> Response {
    (
        StatusCode::ACCEPTED,
        Json(Accepted {
            accepted: true,
            events: events.len(),
        }),
    )
        .into_response()
}

async fn peers(State(st): State<AppState>) -> Json<Vec<PeerInfo>> {
    let s = st.session();
    Json(
        PeerId::ALL
            .into_iter()
            .map(|id| PeerInfo {
                peer: id,
                user: s.peer(id).user().to_string(),
                has_app: s.peer(id).has_app(),
                num_cams: s.num_cams(id),
            })
            .collect(),
    )
}

async fn peer_state(State(st): State<AppState>, Path(peer): Path<String>) -> Response {
    match parse_peer(&peer) {
        Ok(id) => Json(StateMessage::of(&st.session(), id)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn cameras(State(st): State<AppState>, Path(peer): Path<String>) -> Response {
    match parse_peer(&peer) {
        Ok(id) => Json(camera_listing(&st.session(), id)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn advance(st: AppState, peer: String, target: AdvanceTarget) -> Response {
    let id = match parse_peer(&peer) {
        Ok(id) => id,
        Err(e) => return e.into_response(),
    };
    let mut s = st.session();
    if !s.can_advance(id, target) {
        let why = match target {
            AdvanceTarget::Local => format!("peer {id} runs no switching application"),
            AdvanceTarget::Remote => format!("no control path from {id} to {}", id.other()),
        };
        return error(StatusCode::CONFLICT, why);
    }
    accepted(&s.request_advance(id, target))
}

async fn advance_local(State(st): State<AppState>, Path(peer): Path<String>) -> Response {
    advance(st, peer, AdvanceTarget::Local).await
}

async fn advance_remote(State(st): State<AppState>, Path(peer): Path<String>) -> Response {
    advance(st, peer, AdvanceTarget::Remote).await
}

async fn im(State(st): State<AppState>, Path(peer): Path<String>, Json(body): Json<ImRequest>) -> Response {
    match parse_peer(&peer) {
        Ok(id) => accepted(&st.session().deliver_im(id, &body.text)),
        Err(e) => e.into_response(),
    }
}

async fn view(State(st): State<AppState>, Path(peer): Path<String>, ws: WebSocketUpgrade) -> Response {
    match parse_peer(&peer) {
        Ok(id) => {
            let feed = st.feeds[id.index()].clone();
            ws.on_upgrade(move |socket| stream_frames(socket, feed))
        }
        Err(e) => e.into_response(),
    }
}

async fn stream_frames(mut socket: WebSocket, mut feed: FrameFeed) {
    feed.mark_changed();
    loop {
        tokio::select! {
            changed = feed.changed() => {
                if changed.is_err() {
                    break;
                }
                let Some(bytes) = feed.borrow_and_update().clone() else {
                    continue;
                };
                if socket.send(Message::Binary(bytes)).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// The gateway's routes over a shared session.
fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/peers", get(peers))
        .route("/api/{peer}/state", get(peer_state))
        .route("/api/{peer}/cameras", get(cameras))
        .route("/api/{peer}/advance/local", post(advance_local))
        .route("/api/{peer}/advance/remote", post(advance_remote))
        .route("/api/{peer}/im", post(im))
        .route("/api/{peer}/view", get(view))
        .with_state(state)
}

/// Keeps the session clock moving and publishes frames at the stream rate.
async fn ticker(session: Arc<Mutex<Session>>, feeds: [watch::Sender<Option<Bytes>>; 2], opts: GatewayOptions) {
    let mut tick = tokio::time::interval(opts.tick);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let stream_period_us = (1e6 / opts.stream_fps.max(0.001)) as u64;
    let mut last_sent: [Option<(u64, u64)>; 2] = [None, None];
    let mut next_publish_us = 0u64;
    loop {
        tick.tick().await;
        let frames: Vec<(usize, Bytes)> = {
            let mut s = session.lock().unwrap_or_else(|e| e.into_inner());
            let _ = s.sync_to_wall();
            let now = s.now_us();
            if now < next_publish_us {
                continue;
            }
            next_publish_us = now + stream_period_us;
            PeerId::ALL
                .into_iter()
                .filter_map(|id| {
                    let f = s.current_view(id).ok()?;
                    let key = (f.seq, f.timestamp_us);
                    if last_sent[id.index()] == Some(key) {
                        return None;
                    }
                    last_sent[id.index()] = Some(key);
                    Some((id.index(), Bytes::from(encode_frame(id, f))))
                })
                .collect()
        };
        for (i, bytes) in frames {
            feeds[i].send_replace(Some(bytes));
        }
    }
}

/// A gateway running on the current tokio runtime.
pub struct Gateway {
    addr: SocketAddr,
    session: Arc<Mutex<Session>>,
    shutdown: Option<oneshot::Sender<()>>,
    server: JoinHandle<Result<(), std::io::Error>>,
    ticker: JoinHandle<()>,
}

impl Gateway {
    /// Binds `addr` and starts serving `session`, which must use the wall
    /// clock.
    pub async fn start(session: Session, addr: SocketAddr, opts: GatewayOptions) -> Result<Self, GatewayError> {
        if session.clock_mode() != ClockMode::Wall {
            return Err(GatewayError::ClockMode);
        }
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| GatewayError::Bind { addr, source })?;
        let addr = listener
            .local_addr()
            .map_err(|source| GatewayError::Bind { addr, source })?;
        let session = Arc::new(Mutex::new(session));
        let (tx_a, rx_a) = watch::channel(None);
        let (tx_b, rx_b) = watch::channel(None);
        let state = AppState {
            session: session.clone(),
            feeds: [rx_a, rx_b],
        };
        let ticker = tokio::spawn(ticker(session.clone(), [tx_a, tx_b], opts));
        let (shutdown, stop) = oneshot::channel::<()>();
        let app = router(state);
        let server = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stop.await;
                })
                .await
        });
        log::info!("gateway listening on {addr}");
        Ok(Self {
            addr,
            session,
            shutdown: Some(shutdown),
            server,
            ticker,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// The shared session, for inspection alongside the HTTP interface.
    pub fn session(&self) -> Arc<Mutex<Session>> {
        self.session.clone()
    }

    /// Serves until the server stops.
    pub async fn wait(mut self) -> Result<(), GatewayError> {
        let res = (&mut self.server).await;
        self.ticker.abort();
        match res {
            Ok(r) => r.map_err(GatewayError::Serve),
            Err(e) => Err(GatewayError::Serve(std::io::Error::other(e))),
        }
    }

    pub async fn shutdown(mut self) -> Result<(), GatewayError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.wait().await
    }
}

/// Serves `session` on `addr` until the process ends.
pub async fn serve(session: Session, addr: SocketAddr, opts: GatewayOptions) -> Result<(), GatewayError> {
    Gateway::start(session, addr, opts).await?.wait().await
}
