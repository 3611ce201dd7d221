//! In-process topic bus with a logical session clock, bag recording and
//! timed replay.
//!
//! Every message is an [`Envelope`]: a declared topic, a per-topic sequence
//! number starting at 0, a timestamp on the session-normalized clock and an
//! opaque payload. Payloads published through [`Bus::publish_json`] are JSON
//! with round-trip float formatting, so decoding a recorded payload gives
//! bit-identical values.
//!
//! Subscribers get their own queue and see only messages published after
//! they subscribed. All publishes go through one lock, so every subscriber
//! observes the same global order.

mod bag;
mod clock;
mod replay;

pub use bag::{Bag, TopicCount, BAG_MAGIC, BAG_VERSION, INDEX_TOPIC_ID};
pub use clock::{ClockTick, SessionClock};
pub use replay::{replay, ReplaySpeed, ReplayStats};

use serde::{de::DeserializeOwned, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("topic '{0}' is not declared on this bus")]
    UndeclaredTopic(String),
    #[error("timestamp regression on {topic}: {got} after {last}")]
    TimestampRegression { topic: Topic, last: i64, got: i64 },
    #[error("bag sink full: {0}")]
    SinkFull(String),
    #[error("corrupt bag: {0}")]
    CorruptBag(String),
    #[error("bag version {found} not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("payload on {topic}: {reason}")]
    Payload { topic: Topic, reason: String },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = BusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Topic {
    Clock,
    WorldState,
    RawFnirs,
    Hemo,
    Workload,
    Guidance,
    EngineEvents,
    FrontendAcks,
    Session,
    Truth,
}

impl Topic {
    pub const ALL: [Topic; 10] = [
        Topic::Clock,
        Topic::WorldState,
        Topic::RawFnirs,
        Topic::Hemo,
        Topic::Workload,
        Topic::Guidance,
        Topic::EngineEvents,
        Topic::FrontendAcks,
        Topic::Session,
        Topic::Truth,
    ];

    pub fn id(self) -> u16 {
        self as u16 + 1
    }

    pub fn from_id(id: u16) -> Option<Topic> {
        Topic::ALL.into_iter().find(|t| t.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Topic::Clock => "clock",
            Topic::WorldState => "world_state",
            Topic::RawFnirs => "raw_fnirs",
            Topic::Hemo => "hemo",
            Topic::Workload => "workload",
            Topic::Guidance => "guidance",
            Topic::EngineEvents => "engine_events",
            Topic::FrontendAcks => "frontend_acks",
            Topic::Session => "session",
            Topic::Truth => "truth",
        }
    }

    /// Identifier of the payload schema carried on the topic.
    pub fn schema_tag(self) -> &'static str {
        match self {
            Topic::Clock => "ClockTick/json",
            Topic::WorldState => "WorldState/json",
            Topic::RawFnirs => "RawFrame/json",
            Topic::Hemo => "HemoSample/json",
            Topic::Workload => "WorkloadVector/json",
            Topic::Guidance => "GuidanceDecision/json",
            Topic::EngineEvents => "EngineEvent/json",
            Topic::FrontendAcks => "ActionAck/json",
            Topic::Session => "SessionRecord/json",
            Topic::Truth => "TruthRecord/json",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topic {
    type Err = BusError;
    fn from_str(s: &str) -> Result<Self> {
        Topic::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| BusError::UndeclaredTopic(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: Topic,
    pub seq: u64,
    pub timestamp_ns: i64,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn schema_tag(&self) -> &'static str {
        self.topic.schema_tag()
    }

    pub fn decode<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_slice(&self.payload).map_err(|e| BusError::Payload { topic: self.topic, reason: e.to_string() })
    }
}

pub fn encode<T: Serialize>(topic: Topic, value: &T) -> Result<Vec<u8>> {
    serde_json::to_vec(value).map_err(|e| BusError::Payload { topic, reason: e.to_string() })
}

struct TopicState {
    next_seq: u64,
    last_ts: Option<i64>,
}

struct Subscriber {
    topics: Vec<Topic>,
    tx: Sender<Envelope>,
}

struct Inner {
    topics: HashMap<Topic, TopicState>,
    subscribers: Vec<Subscriber>,
    recording: Option<Vec<Envelope>>,
    record_limit: Option<usize>,
}

pub struct Bus {
    inner: Mutex<Inner>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new(&Topic::ALL)
    }
}

impl Bus {
    pub fn new(declared: &[Topic]) -> Self {
        let topics = declared.iter().map(|&t| (t, TopicState { next_seq: 0, last_ts: None })).collect();
        Self { inner: Mutex::new(Inner { topics, subscribers: Vec::new(), recording: None, record_limit: None }) }
    }

    pub fn declared(&self) -> Vec<Topic> {
        let mut v: Vec<Topic> = self.lock().topics.keys().copied().collect();
        v.sort();
        v
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("bus lock poisoned")
    }

    pub fn publish(&self, topic: Topic, timestamp_ns: i64, payload: Vec<u8>) -> Result<u64> {
        let mut inner = self.lock();
        let state = inner.topics.get_mut(&topic).ok_or_else(|| BusError::UndeclaredTopic(topic.name().to_string()))?;
        if let Some(last) = state.last_ts {
            if timestamp_ns < last {
                return Err(BusError::TimestampRegression { topic, last, got: timestamp_ns });
            }
        }
        let seq = state.next_seq;
        state.next_seq += 1;
        state.last_ts = Some(timestamp_ns);
        let env = Envelope { topic, seq, timestamp_ns, payload };
        let limit = inner.record_limit;
        if let Some(rec) = inner.recording.as_mut() {
            if limit.is_some_and(|l| rec.len() >= l) {
                return Err(BusError::SinkFull(format!("limit of {} envelopes reached", rec.len())));
            }
            rec.push(env.clone());
        }
        // dropped receivers are pruned lazily
        inner.subscribers.retain(|s| !s.topics.contains(&topic) || s.tx.send(env.clone()).is_ok());
        Ok(seq)
    }

    pub fn publish_json<T: Serialize>(&self, topic: Topic, timestamp_ns: i64, value: &T) -> Result<u64> {
        self.publish(topic, timestamp_ns, encode(topic, value)?)
    }

    pub fn subscribe(&self, topics: &[Topic]) -> Result<Receiver<Envelope>> {
        let mut inner = self.lock();
        if let Some(t) = topics.iter().find(|t| !inner.topics.contains_key(t)) {
            return Err(BusError::UndeclaredTopic(t.name().to_string()));
        }
        let (tx, rx) = mpsc::channel();
        inner.subscribers.push(Subscriber { topics: topics.to_vec(), tx });
        Ok(rx)
    }

    /// Starts recording. With a limit, publishes beyond that many envelopes
    /// fail with `SinkFull`.
    pub fn start_record(&self, limit: Option<usize>) {
        let mut inner = self.lock();
        inner.recording = Some(Vec::new());
        inner.record_limit = limit;
    }

    pub fn is_recording(&self) -> bool {
        self.lock().recording.is_some()
    }

    /// Stops recording and returns everything published since
    /// `start_record`, in timestamp order (publish order among equal
    /// timestamps).
    pub fn stop_record(&self, session_id: &str, epoch_ns: i64) -> Bag {
        let mut records = self.lock().recording.take().unwrap_or_default();
        records.sort_by_key(|e| e.timestamp_ns);
        Bag::new(session_id, epoch_ns, self.declared(), records)
    }
}
