use std::net::SocketAddr;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use neuroguide::bus::{Bag, Topic};
use neuroguide::policy::Condition;
use neuroguide::sim::{event_log_bytes, fixture_models, replay_session, LagConfig};
use neuroguide::task::{ChecklistSnapshot, ChecklistSpec, EventKind, StepStatus};
use neuroguide_gateway::{bind, serve, ClientMessage, GatewayConfig, ServerMessage, StartConfig, CLOSE_BUSY, CLOSE_PROTOCOL};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(cfg: GatewayConfig) -> SocketAddr {
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, cfg));
    addr
}

fn config(speed: f64) -> GatewayConfig {
    GatewayConfig { speed, ..GatewayConfig::new(fixture_models()) }
}

async fn connect(addr: SocketAddr) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/session")).await.unwrap().0
}

async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::text(serde_json::to_string(msg).unwrap())).await.unwrap();
}

/// Next non-heartbeat message, or `None` when the socket closes.
async fn next(ws: &mut Ws) -> Option<ServerMessage> {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("server went quiet")?;
        match frame.unwrap() {
            Message::Text(t) => match serde_json::from_str(&t).unwrap() {
                ServerMessage::Heartbeat { .. } => continue,
                m => return Some(m),
            },
            Message::Close(_) => return None,
            _ => continue,
        }
    }
}

async fn next_snapshot(ws: &mut Ws) -> ChecklistSnapshot {
    loop {
        if let Some(ServerMessage::ChecklistState { snapshot }) = next(ws).await {
            return snapshot;
        }
    }
}

fn start_msg(condition: Condition) -> ClientMessage {
    ClientMessage::StartSession {
        config: StartConfig { condition, seed: 11, script: None, lag: None, checklist: None, time_cap_s: None },
    }
}

fn correct_action(snapshot: &ChecklistSnapshot) -> ClientMessage {
    let spec = ChecklistSpec::fixture();
    let step = spec.step(snapshot.active_step.as_deref().unwrap()).unwrap();
    ClientMessage::Action { control_id: step.control.clone(), value: step.expect.target_value() }
}

#[tokio::test]
async fn healthz_answers_ok() {
    let addr = start(config(1.0)).await;
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(b"GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.ends_with("ok"), "{body}");
}

#[tokio::test(flavor = "multi_thread")]
async fn valid_action_advances_within_200ms() {
    let addr = start(config(1.0)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, &start_msg(Condition::Baseline)).await;
    let first = next_snapshot(&mut ws).await;
    assert_eq!(first.done_count, 0);
    let mut snap = first;
    for _ in 0..3 {
        let latency = next_snapshot_after_action(&mut ws, &snap).await;
        assert!(latency < Duration::from_millis(200), "{latency:?}");
        snap = ChecklistSnapshot { done_count: snap.done_count + 1, active_step: next_step(&snap), ..snap };
    }
}

fn next_step(snap: &ChecklistSnapshot) -> Option<String> {
    let ids: Vec<&String> = snap.procedures.iter().flat_map(|p| p.steps.iter().map(|s| &s.id)).collect();
    let i = ids.iter().position(|id| Some(*id) == snap.active_step.as_ref())?;
    ids.get(i + 1).map(|s| s.to_string())
}

async fn next_snapshot_after_action(ws: &mut Ws, snap: &ChecklistSnapshot) -> Duration {
    let sent = Instant::now();
    send(ws, &correct_action(snap)).await;
    let after = next_snapshot(ws).await;
    assert_eq!(after.done_count, snap.done_count + 1);
    sent.elapsed()
}

#[tokio::test(flavor = "multi_thread")]
async fn undeclared_control_is_a_violation_and_harmless() {
    let addr = start(config(1.0)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, &ClientMessage::Action { control_id: "nothing".into(), value: "ON".into() }).await;
    assert!(matches!(next(&mut ws).await, Some(ServerMessage::ProtocolViolation { .. })));
    send(&mut ws, &start_msg(Condition::Baseline)).await;
    let snap = next_snapshot(&mut ws).await;
    send(&mut ws, &ClientMessage::Action { control_id: "no_such_switch".into(), value: "ON".into() }).await;
    match next(&mut ws).await {
        Some(ServerMessage::ProtocolViolation { reason }) => assert!(reason.contains("no_such_switch")),
        other => panic!("{other:?}"),
    }
    send(&mut ws, &ClientMessage::GazeUpdate { control_id: Some("no_such_switch".into()) }).await;
    assert!(matches!(next(&mut ws).await, Some(ServerMessage::ProtocolViolation { .. })));
    send(&mut ws, &ClientMessage::AckError { error_id: 99 }).await;
    assert!(matches!(next(&mut ws).await, Some(ServerMessage::ProtocolViolation { .. })));
    send(&mut ws, &start_msg(Condition::Baseline)).await;
    assert!(matches!(next(&mut ws).await, Some(ServerMessage::ProtocolViolation { .. })));
    next_snapshot_after_action(&mut ws, &snap).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_frames_close_the_connection_with_a_reason() {
    let addr = start(config(1.0)).await;
    let mut ws = connect(addr).await;
    ws.send(Message::text("{\"type\":\"launch\"}")).await.unwrap();
    let mut explained = false;
    loop {
        match ws.next().await {
            Some(Ok(Message::Text(t))) => {
                explained |= matches!(serde_json::from_str(&t).unwrap(), ServerMessage::ProtocolViolation { .. });
            }
            Some(Ok(Message::Close(Some(frame)))) => {
                assert_eq!(frame.code, CloseCode::from(CLOSE_PROTOCOL));
                assert!(!frame.reason.is_empty());
                assert!(explained);
                break;
            }
            Some(Ok(_)) => continue,
            other => panic!("{other:?}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn second_operator_is_turned_away() {
    let addr = start(config(1.0)).await;
    let _first = connect(addr).await;
    let mut second = connect(addr).await;
    loop {
        match second.next().await {
            Some(Ok(Message::Close(Some(frame)))) => {
                assert_eq!(frame.code, CloseCode::from(CLOSE_BUSY));
                break;
            }
            Some(Ok(_)) => continue,
            other => panic!("{other:?}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn heartbeats_arrive_once_a_second() {
    assert_eq!(GatewayConfig::new(fixture_models()).heartbeat, Duration::from_secs(1));
    let addr = start(config(1.0)).await;
    let mut ws = connect(addr).await;
    let t0 = Instant::now();
    let mut seqs = Vec::new();
    while seqs.len() < 3 {
        if let Some(Ok(Message::Text(t))) = ws.next().await {
            if let ServerMessage::Heartbeat { seq } = serde_json::from_str(&t).unwrap() {
                seqs.push(seq);
            }
        }
    }
    let elapsed = t0.elapsed();
    assert_eq!(seqs, vec![0, 1, 2]);
    assert!(elapsed >= Duration::from_millis(1900) && elapsed < Duration::from_millis(3000), "{elapsed:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn reconnect_resumes_with_a_full_snapshot() {
    let addr = start(config(1.0)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, &start_msg(Condition::Baseline)).await;
    let snap = next_snapshot(&mut ws).await;
    next_snapshot_after_action(&mut ws, &snap).await;
    ws.close(None).await.unwrap();
    drop(ws);
    tokio::time::sleep(Duration::from_millis(100)).await;
    let paused_at = {
        let mut probe = connect(addr).await;
        let s = next_snapshot(&mut probe).await;
        probe.close(None).await.unwrap();
        s
    };
    tokio::time::sleep(Duration::from_millis(700)).await;
    let mut ws = connect(addr).await;
    let resumed = next_snapshot(&mut ws).await;
    assert_eq!(resumed.done_count, 1);
    assert_eq!(resumed.procedures, paused_at.procedures);
    // no session time passes while nobody is connected
    assert!(resumed.timestamp_ns - paused_at.timestamp_ns <= 300_000_000, "{} vs {}", resumed.timestamp_ns, paused_at.timestamp_ns);
    next_snapshot_after_action(&mut ws, &resumed).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_rejects_actions_until_resume() {
    let addr = start(config(1.0)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, &start_msg(Condition::Baseline)).await;
    let snap = next_snapshot(&mut ws).await;
    send(&mut ws, &ClientMessage::Pause).await;
    send(&mut ws, &correct_action(&snap)).await;
    assert!(matches!(next(&mut ws).await, Some(ServerMessage::ProtocolViolation { .. })));
    send(&mut ws, &ClientMessage::Resume).await;
    next_snapshot_after_action(&mut ws, &snap).await;
}

struct Run {
    messages: Vec<ServerMessage>,
    bag: Bag,
}

/// Plays the whole checklist as a human would: waits for guidance (or a
/// timeout) before each step, slips once on a distractor and acknowledges
/// the alert.
async fn play(condition: Condition, lag: Option<LagConfig>) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GatewayConfig { bag_dir: Some(dir.path().to_path_buf()), ..config(50.0) };
    let addr = start(cfg).await;
    let mut ws = connect(addr).await;
    let start = ClientMessage::StartSession {
        config: StartConfig { condition, seed: 5, script: Some("task_coupled".into()), lag, checklist: None, time_cap_s: None },
    };
    send(&mut ws, &start).await;
    let spec = ChecklistSpec::fixture();
    let distractor = spec.distractors()[0].id.clone();
    let mut messages = Vec::new();
    let mut snapshot: Option<ChecklistSnapshot> = None;
    let mut slipped = false;
    let mut acted_on: Option<String> = None;
    let session_id = loop {
        let msg = next(&mut ws).await.expect("socket closed early");
        messages.push(msg.clone());
        match msg {
            ServerMessage::ChecklistState { snapshot: s } => {
                if condition == Condition::Baseline && !s.complete && acted_on != s.active_step {
                    send(&mut ws, &correct_action(&s)).await;
                    acted_on = s.active_step.clone();
                }
                snapshot = Some(s);
            }
            ServerMessage::Guidance { decision } => {
                let s = snapshot.clone().unwrap();
                if s.active_step.as_deref() != Some(decision.step_id.as_str()) || acted_on == s.active_step {
                    continue;
                }
                if !slipped && s.done_count == 2 {
                    slipped = true;
                    send(&mut ws, &ClientMessage::Action { control_id: distractor.clone(), value: "ON".into() }).await;
                } else {
                    send(&mut ws, &correct_action(&s)).await;
                    acted_on = s.active_step.clone();
                }
            }
            ServerMessage::ErrorAlert { view } => {
                send(&mut ws, &ClientMessage::AckError { error_id: view.error_id }).await;
            }
            ServerMessage::SessionEnded { session_id, .. } => break session_id,
            _ => {}
        }
    };
    let bag = Bag::read(&dir.path().join(format!("{session_id}.bag"))).unwrap();
    Run { messages, bag }
}

#[tokio::test(flavor = "multi_thread")]
async fn human_session_completes_and_replays() {
    let run = play(Condition::Adaptive, None).await;
    let Some(ServerMessage::SessionEnded { metrics, .. }) = run.messages.last() else { panic!() };
    assert_eq!(metrics.steps_completed, 27);
    assert_eq!(metrics.false_errors, 0);
    assert_eq!(metrics.errors, 1);

    // each pushed decision is one recorded on the guidance topic, in order
    let pushed: Vec<_> = run
        .messages
        .iter()
        .filter_map(|m| match m {
            ServerMessage::Guidance { decision } => Some(decision.clone()),
            _ => None,
        })
        .collect();
    let recorded: Vec<_> = run.bag.on(Topic::Guidance).map(|e| e.decode().unwrap()).collect();
    assert_eq!(pushed, recorded);

    // one decision per decision-triggering engine event
    let events: Vec<neuroguide::task::EngineEvent> = run.bag.on(Topic::EngineEvents).map(|e| e.decode().unwrap()).collect();
    let triggers = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::GuidanceDue { .. } | EventKind::Timeout { .. } | EventKind::ErrorDetected { .. }))
        .count();
    assert_eq!(pushed.len(), triggers);
    assert!(events.iter().any(|e| matches!(e.kind, EventKind::GuidanceDue { .. })));

    let replayed = replay_session(&run.bag).unwrap();
    assert_eq!(replayed.event_log(), event_log_bytes(&events));
    assert_eq!(replayed.metrics.as_ref(), Some(metrics));
}

#[tokio::test(flavor = "multi_thread")]
async fn baseline_session_pushes_no_guidance() {
    let run = play(Condition::Baseline, None).await;
    assert!(!run.messages.iter().any(|m| matches!(m, ServerMessage::Guidance { .. })));
    let Some(ServerMessage::SessionEnded { metrics, .. }) = run.messages.last() else { panic!() };
    assert_eq!(metrics.steps_completed, 27);
    let last = run.messages.iter().rev().find_map(|m| match m {
        ServerMessage::ChecklistState { snapshot } => Some(snapshot.clone()),
        _ => None,
    });
    let last = last.unwrap();
    assert!(last.complete);
    assert!(last.procedures.iter().flat_map(|p| &p.steps).all(|s| s.status == StepStatus::Done));
}

#[tokio::test(flavor = "multi_thread")]
async fn injected_lag_shows_up_only_as_false_errors() {
    let addr = start(config(10.0)).await;
    let mut ws = connect(addr).await;
    let start = ClientMessage::StartSession {
        config: StartConfig {
            condition: Condition::Baseline,
            seed: 3,
            script: None,
            lag: Some(LagConfig::late(0.3)),
            checklist: None,
            time_cap_s: None,
        },
    };
    send(&mut ws, &start).await;
    next_snapshot(&mut ws).await;
    // a fast operator works ahead without waiting for confirmation
    let spec = ChecklistSpec::fixture();
    for (_, step) in spec.steps() {
        send(&mut ws, &ClientMessage::Action { control_id: step.control.clone(), value: step.expect.target_value() }).await;
        tokio::time::sleep(Duration::from_millis(30)).await;
    }
    let metrics = loop {
        if let Some(ServerMessage::SessionEnded { metrics, .. }) = next(&mut ws).await {
            break metrics;
        }
    };
    assert_eq!(metrics.steps_completed, 27);
    assert!(metrics.false_errors > 0, "{metrics:?}");
    assert_eq!(metrics.errors, 0, "{metrics:?}");
}
