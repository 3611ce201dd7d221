use serde::{Deserialize, Serialize};

use super::{ControlValue, EngineEvent, EventKind, Result, TaskError};

/// Operator-side acknowledgement of one action: when it happened at the
/// console and when the backend received it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionAck {
    pub control_id: String,
    pub value: ControlValue,
    pub event_ns: i64,
    pub delivered_ns: i64,
}

impl ActionAck {
    pub fn lag_ns(&self) -> i64 {
        self.delivered_ns - self.event_ns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseErrorReport {
    pub total_actions: usize,
    pub total_errors: usize,
    pub false_errors: usize,
    pub false_error_ids: Vec<u64>,
    /// False errors per acknowledged action.
    pub rate: f64,
    /// False errors as a share of all detected errors.
    pub share_of_errors: f64,
}

impl FalseErrorReport {
    pub fn genuine_errors(&self) -> usize {
        self.total_errors - self.false_errors
    }
}

/// Decides whether an error was produced by delivery lag: the expected
/// control was in fact operated before the offending action, but its
/// acknowledgement reached the backend within `horizon_ns` after the error.
pub fn is_false_error(error_ns: i64, action_ns: i64, expected_control: &str, acks: &[ActionAck], horizon_ns: i64) -> bool {
    acks.iter().any(|a| {
        a.control_id == expected_control
            && a.event_ns < action_ns
            && a.delivered_ns >= error_ns
            && a.delivered_ns <= error_ns + horizon_ns
    })
}

pub fn false_error_monitor(events: &[EngineEvent], acks: &[ActionAck], horizon_ns: i64) -> Result<FalseErrorReport> {
    for w in events.windows(2) {
        if w[1].timestamp_ns < w[0].timestamp_ns {
            return Err(TaskError::ClockSkewDetected(format!(
                "event log goes back from {} to {}",
                w[0].timestamp_ns, w[1].timestamp_ns
            )));
        }
    }
    for a in acks {
        if a.delivered_ns < a.event_ns {
            return Err(TaskError::ClockSkewDetected(format!(
                "ack for '{}' delivered at {} before it happened at {}",
                a.control_id, a.delivered_ns, a.event_ns
            )));
        }
    }
    for w in acks.windows(2) {
        if w[1].delivered_ns < w[0].delivered_ns {
            return Err(TaskError::ClockSkewDetected("ack log is not in delivery order".into()));
        }
    }
    let mut total_errors = 0;
    let mut false_error_ids = Vec::new();
    for e in events {
        if let EventKind::ErrorDetected { error_id, expected_control, action_ns, .. } = &e.kind {
            total_errors += 1;
            if is_false_error(e.timestamp_ns, *action_ns, expected_control, acks, horizon_ns) {
                false_error_ids.push(*error_id);
            }
        }
    }
    let false_errors = false_error_ids.len();
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Ok(FalseErrorReport {
        total_actions: acks.len(),
        total_errors,
        false_errors,
        rate: ratio(false_errors, acks.len()),
        share_of_errors: ratio(false_errors, total_errors),
        false_error_ids,
    })
}
