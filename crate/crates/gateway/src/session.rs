use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::sync::mpsc::UnboundedSender;
use tokio::sync::oneshot;

use neuroguide::classifier::FacetModels;
use neuroguide::policy::Reasoner;
use neuroguide::sim::{Driver, LagBridge, LoadScript, SessionConfig, SessionCore, SessionStatus, TickReport};
use neuroguide::task::{Action, EventKind};

use crate::protocol::{ClientMessage, ServerMessage, StartConfig};

/// Everything a session thread needs besides its own configuration.
#[derive(Clone)]
pub(crate) struct Runtime {
    pub models: FacetModels,
    pub reasoner: Option<Arc<dyn Reasoner>>,
    pub speed: f64,
    pub bag_dir: Option<PathBuf>,
}

pub(crate) enum Command {
    Attach(UnboundedSender<ServerMessage>),
    Detach,
    Client(ClientMessage),
}

pub(crate) struct SessionHandle {
    pub commands: mpsc::Sender<Command>,
    pub finished: Arc<AtomicBool>,
}

impl SessionHandle {
    pub fn is_live(&self) -> bool {
        !self.finished.load(Ordering::SeqCst)
    }
}

pub(crate) fn session_config(start: &StartConfig) -> Result<SessionConfig, String> {
    let mut cfg = SessionConfig::new(start.condition, start.seed);
    cfg.driver = Driver::Human;
    if let Some(name) = &start.script {
        cfg.script = LoadScript::preset(name).map_err(|e| e.to_string())?;
    }
    if let Some(lag) = &start.lag {
        cfg.lag = lag.clone();
    }
    if let Some(spec) = &start.checklist {
        spec.validate().map_err(|e| e.to_string())?;
        cfg.checklist = spec.clone();
    }
    if let Some(cap) = start.time_cap_s {
        cfg.time_cap_s = cap;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    cfg.lag.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Starts the session loop on its own thread. Resolves once calibration
/// is done and the first snapshot has been sent to `sink`.
pub(crate) async fn spawn(cfg: SessionConfig, rt: Runtime, sink: UnboundedSender<ServerMessage>) -> Result<SessionHandle, String> {
    let (tx, rx) = mpsc::channel();
    let (ready_tx, ready_rx) = oneshot::channel();
    let finished = Arc::new(AtomicBool::new(false));
    let done = finished.clone();
    std::thread::Builder::new()
        .name(format!("session-{}", cfg.session_id()))
        .spawn(move || {
            let run = SessionLoop::new(cfg, &rt, sink);
            match run {
                Ok(s) => {
                    let _ = ready_tx.send(Ok(()));
                    s.run(rx, &rt);
                }
                Err(e) => {
                    let _ = ready_tx.send(Err(e));
                }
            }
            done.store(true, Ordering::SeqCst);
        })
        .map_err(|e| e.to_string())?;
    ready_rx.await.map_err(|_| "session thread exited during start".to_string())??;
    Ok(SessionHandle { commands: tx, finished })
}

struct SessionLoop {
    core: SessionCore,
    bridge: LagBridge,
    sink: Option<UnboundedSender<ServerMessage>>,
    paused: bool,
    t: i64,
    actions: Vec<Action>,
    gaze: Option<String>,
    acks: Vec<u64>,
}

impl SessionLoop {
    fn new(cfg: SessionConfig, rt: &Runtime, sink: UnboundedSender<ServerMessage>) -> Result<Self, String> {
        let bridge = LagBridge::new(cfg.lag.clone(), cfg.seed, cfg.tick_ns()).map_err(|e| e.to_string())?;
        let core = SessionCore::new(cfg, &rt.models, rt.reasoner.clone()).map_err(|e| e.to_string())?;
        let mut s = Self { t: core.task_start_ns(), core, bridge, sink: Some(sink), paused: false, actions: Vec::new(), gaze: None, acks: Vec::new() };
        s.send_snapshot();
        Ok(s)
    }

    fn send(&mut self, msg: ServerMessage) {
        if let Some(sink) = &self.sink {
            if sink.send(msg).is_err() {
                self.sink = None;
            }
        }
    }

    fn send_snapshot(&mut self) {
        let snapshot = self.core.engine().snapshot();
        self.send(ServerMessage::ChecklistState { snapshot });
    }

    fn violation(&mut self, reason: impl Into<String>) {
        self.send(ServerMessage::ProtocolViolation { reason: reason.into() });
    }

    fn known_control(&self, id: &str) -> bool {
        self.core.config().checklist.control(id).is_some()
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Attach(sink) => {
                self.sink = Some(sink);
                self.send_snapshot();
            }
            Command::Detach => self.sink = None,
            Command::Client(msg) => self.client(msg),
        }
    }

    fn client(&mut self, msg: ClientMessage) {
        match msg {
            ClientMessage::Action { .. } | ClientMessage::AckError { .. } if self.paused => {
                self.violation("session is paused");
            }
            ClientMessage::Action { control_id, value } => {
                if self.known_control(&control_id) {
                    self.actions.push(Action { control_id, value, timestamp_ns: 0 });
                } else {
                    self.violation(format!("undeclared control '{control_id}'"));
                }
            }
            ClientMessage::GazeUpdate { control_id } => match control_id {
                Some(id) if !self.known_control(&id) => self.violation(format!("undeclared control '{id}'")),
                other => self.gaze = other,
            },
            ClientMessage::AckError { error_id } => {
                if self.core.engine().current_error() == Some(error_id) && !self.acks.contains(&error_id) {
                    self.acks.push(error_id);
                } else {
                    self.violation(format!("error {error_id} is not awaiting acknowledgement"));
                }
            }
            ClientMessage::Pause => self.paused = true,
            ClientMessage::Resume => self.paused = false,
            ClientMessage::StartSession { .. } => self.violation("a session is already running"),
        }
    }

    fn publish(&mut self, report: TickReport) {
        let changed = report.events.iter().any(|e| {
            matches!(
                e.kind,
                EventKind::StepCompleted { .. } | EventKind::ErrorDetected { .. } | EventKind::ErrorAcknowledged { .. } | EventKind::ChecklistComplete
            )
        });
        if changed {
            self.send_snapshot();
        }
        for (decision, _) in report.decisions {
            self.send(ServerMessage::Guidance { decision });
        }
        if let Some(view) = report.alert {
            self.send(ServerMessage::ErrorAlert { view });
        }
        if let Some(workload) = report.workload {
            self.send(ServerMessage::Workload { workload });
        }
    }

    fn tick(&mut self) -> Result<Option<SessionStatus>, String> {
        let t = self.t;
        let r = self.core.begin_tick(t).map_err(|e| e.to_string())?;
        self.publish(r);
        for mut a in std::mem::take(&mut self.actions) {
            a.timestamp_ns = t;
            self.bridge.submit(a, t);
        }
        let delivered = self.bridge.deliver(t);
        let r = self.core.deliver(t, delivered, self.gaze.clone()).map_err(|e| e.to_string())?;
        self.publish(r);
        for id in std::mem::take(&mut self.acks) {
            // a delivery in this tick may already have resolved the error
            if self.core.engine().current_error() == Some(id) {
                let r = self.core.error_ack(id, t).map_err(|e| e.to_string())?;
                self.publish(r);
            }
        }
        self.t += self.core.tick_ns();
        Ok(if self.core.is_complete() {
            Some(SessionStatus::Complete)
        } else if self.core.time_cap_reached(t) {
            Some(SessionStatus::TimeCapExceeded)
        } else {
            None
        })
    }

    fn run(mut self, commands: mpsc::Receiver<Command>, rt: &Runtime) {
        let period = Duration::from_secs_f64(self.core.tick_ns() as f64 / 1e9 / rt.speed);
        let mut next = Instant::now() + period;
        loop {
            match commands.recv_timeout(next.saturating_duration_since(Instant::now())) {
                Ok(cmd) => {
                    self.handle(cmd);
                    continue;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return,
            }
            next += period;
            if next < Instant::now() {
                next = Instant::now() + period;
            }
            // a detached session is paused until an operator reconnects
            if self.paused || self.sink.is_none() {
                continue;
            }
            let status = match self.tick() {
                Ok(None) => continue,
                Ok(Some(status)) => status,
                Err(e) => {
                    tracing::error!("session aborted: {e}");
                    self.violation(format!("session aborted: {e}"));
                    return;
                }
            };
            self.end(status, rt);
            return;
        }
    }

    fn end(self, status: SessionStatus, rt: &Runtime) {
        let session_id = self.core.config().session_id();
        let mut sink = self.sink;
        let outcome = match self.core.finish(status) {
            Ok(o) => o,
            Err(e) => {
                tracing::error!("could not close session {session_id}: {e}");
                return;
            }
        };
        if let Some(dir) = &rt.bag_dir {
            let path = dir.join(format!("{session_id}.bag"));
            if let Err(e) = outcome.bag.write(&path) {
                tracing::error!("could not write {}: {e}", path.display());
            }
        }
        if let Some(s) = sink.take() {
            let _ = s.send(ServerMessage::SessionEnded { session_id, metrics: outcome.metrics });
        }
    }
}
