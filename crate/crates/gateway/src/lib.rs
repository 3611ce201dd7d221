//! Network edge for human-operated sessions.
//!
//! `/session` is a websocket carrying JSON text frames (see [`protocol`]);
//! `/healthz` answers `ok`. Only one operator may be connected at a time and
//! at most one session runs. The session loop lives on its own thread and
//! keeps running across reconnects: a disconnect pauses it and the next
//! connection resumes it after a fresh checklist snapshot.

pub mod protocol;
mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};

use neuroguide::classifier::FacetModels;
use neuroguide::policy::Reasoner;

pub use protocol::{ClientMessage, ServerMessage, StartConfig};
use session::{Command, Runtime, SessionHandle};

/// Close code sent when a frame cannot be read as a [`ClientMessage`].
pub const CLOSE_PROTOCOL: u16 = 1008;
/// Close code sent to a second operator while one is connected.
pub const CLOSE_BUSY: u16 = 1013;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error("server stopped: {0}")]
    Serve(std::io::Error),
}

#[derive(Clone)]
pub struct GatewayConfig {
    pub models: FacetModels,
    /// Used by the adaptive condition; the rule table answers when unset.
    pub reasoner: Option<Arc<dyn Reasoner>>,
    /// Session time per wall time. 1.0 runs ticks at 10 Hz.
    pub speed: f64,
    /// Finished sessions are written here as `<session id>.bag`.
    pub bag_dir: Option<PathBuf>,
    pub heartbeat: Duration,
}

impl GatewayConfig {
    pub fn new(models: FacetModels) -> Self {
        Self { models, reasoner: None, speed: 1.0, bag_dir: None, heartbeat: Duration::from_secs(1) }
    }
}

struct Shared {
    runtime: Runtime,
    heartbeat: Duration,
    session: Mutex<Option<SessionHandle>>,
    connected: AtomicBool,
}

pub fn router(cfg: GatewayConfig) -> Router {
    let shared = Arc::new(Shared {
        runtime: Runtime { models: cfg.models, reasoner: cfg.reasoner, speed: cfg.speed, bag_dir: cfg.bag_dir },
        heartbeat: cfg.heartbeat,
        session: Mutex::new(None),
        connected: AtomicBool::new(false),
    });
    Router::new().route("/healthz", get(|| async { "ok" })).route("/session", get(upgrade)).with_state(shared)
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, GatewayError> {
    TcpListener::bind(addr).await.map_err(|source| GatewayError::BindFailure { addr, source })
}

pub async fn serve(listener: TcpListener, cfg: GatewayConfig) -> Result<(), GatewayError> {
    axum::serve(listener, router(cfg)).await.map_err(GatewayError::Serve)
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn close(socket: &mut WebSocket, code: u16, reason: &str) {
    // close frame reasons are limited to 123 bytes
    let mut end = reason.len().min(120);
    while !reason.is_char_boundary(end) {
        end -= 1;
    }
    let frame = CloseFrame { code, reason: reason[..end].into() };
    let _ = socket.send(Message::Close(Some(frame))).await;
}

async fn connection(mut socket: WebSocket, shared: Arc<Shared>) {
    if shared.connected.swap(true, Ordering::SeqCst) {
        close(&mut socket, CLOSE_BUSY, "another operator is connected").await;
        return;
    }
    let (out_tx, mut out_rx) = unbounded_channel();
    shared.attach(&out_tx);
    let mut heartbeat = tokio::time::interval(shared.heartbeat);
    let mut beats = 0u64;
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        close(&mut socket, CLOSE_PROTOCOL, "binary frames are not part of the protocol").await;
                        break;
                    }
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                match ClientMessage::parse(&text) {
                    Ok(msg) => shared.client(msg, &out_tx).await,
                    Err(reason) => {
                        let full = ServerMessage::ProtocolViolation { reason: reason.clone() };
                        let _ = socket.send(Message::Text(full.to_json().into())).await;
                        close(&mut socket, CLOSE_PROTOCOL, &reason).await;
                        break;
                    }
                }
            }
            Some(out) = out_rx.recv() => {
                if socket.send(Message::Text(out.to_json().into())).await.is_err() {
                    break;
                }
            }
            _ = heartbeat.tick() => {
                let msg = ServerMessage::Heartbeat { seq: beats };
                beats += 1;
                if socket.send(Message::Text(msg.to_json().into())).await.is_err() {
                    break;
                }
            }
        }
    }
    shared.detach();
    shared.connected.store(false, Ordering::SeqCst);
}

impl Shared {
    fn live_commands(&self) -> Option<std::sync::mpsc::Sender<Command>> {
        let mut slot = self.session.lock().expect("session slot");
        if slot.as_ref().is_some_and(|h| !h.is_live()) {
            *slot = None;
        }
        slot.as_ref().map(|h| h.commands.clone())
    }

    fn attach(&self, sink: &UnboundedSender<ServerMessage>) {
        if let Some(c) = self.live_commands() {
            let _ = c.send(Command::Attach(sink.clone()));
        }
    }

    fn detach(&self) {
        if let Some(c) = self.live_commands() {
            let _ = c.send(Command::Detach);
        }
    }

    async fn client(&self, msg: ClientMessage, sink: &UnboundedSender<ServerMessage>) {
        let violation = |reason: String| {
            let _ = sink.send(ServerMessage::ProtocolViolation { reason });
        };
        let commands = self.live_commands();
        match (msg, commands) {
            (ClientMessage::StartSession { .. }, Some(_)) => violation("a session is already running".into()),
            (ClientMessage::StartSession { config }, None) => {
                let cfg = match session::session_config(&config) {
                    Ok(c) => c,
                    Err(e) => return violation(format!("invalid session config: {e}")),
                };
                match session::spawn(cfg, self.runtime.clone(), sink.clone()).await {
                    Ok(handle) => *self.session.lock().expect("session slot") = Some(handle),
                    Err(e) => violation(format!("session failed to start: {e}")),
                }
            }
            (_, None) => violation("no session is running".into()),
            (msg, Some(c)) => {
                if c.send(Command::Client(msg)).is_err() {
                    violation("no session is running".into());
                }
            }
        }
    }
}
