//! JSON text frames exchanged on `/session`. Both enums are internally
//! tagged by a `type` field in snake case, for example
//! `{"type":"action","control_id":"bat_master","value":"ON"}`.

use serde::{Deserialize, Serialize};

use neuroguide::classifier::WorkloadVector;
use neuroguide::policy::{Condition, GuidanceDecision};
use neuroguide::sim::{LagConfig, SessionMetrics};
use neuroguide::task::{ChecklistSnapshot, ChecklistSpec, ControlValue, DashboardView};

/// Session settings a client may choose. Anything left out takes the
/// server default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartConfig {
    pub condition: Condition,
    #[serde(default)]
    pub seed: u64,
    /// Name of a load script preset driving the synthetic fNIRS stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    /// Artificial delivery lag between this client and the task engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<LagConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checklist: Option<ChecklistSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_cap_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    StartSession { config: StartConfig },
    Action { control_id: String, value: ControlValue },
    /// `None` clears the gaze target.
    GazeUpdate { control_id: Option<String> },
    AckError { error_id: u64 },
    Pause,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    ChecklistState { snapshot: ChecklistSnapshot },
    Guidance { decision: GuidanceDecision },
    ErrorAlert { view: DashboardView },
    Workload { workload: WorkloadVector },
    SessionEnded { session_id: String, metrics: SessionMetrics },
    /// Sent once a second on every connection.
    Heartbeat { seq: u64 },
    /// The offending message was ignored; the session carries on.
    ProtocolViolation { reason: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("unreadable message: {e}"))
    }
}
