//! Procedural grounding: checklist task trees driven by world states.

mod checklist;
mod engine;
mod false_error;
mod log;

pub use checklist::{ChecklistSpec, Control, ControlKind, Expect, GuidanceText, Procedure, Step};
pub use engine::{
    ChecklistSnapshot, DashboardView, EngineConfig, EngineEvent, EventKind, ProcedureSnapshot, StepSnapshot, StepStatus,
    TaskEngine, SECOND_NS,
};
pub use false_error::{false_error_monitor, is_false_error, ActionAck, FalseErrorReport};
pub use log::{event_log_line, read_event_log, write_event_log, EventRecord};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("checklist schema: {0}")]
    SchemaError(String),
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("step '{step}' references undeclared control '{control}'")]
    DanglingControlRef { step: String, control: String },
    #[error("world state at {got} ns precedes previous state at {previous} ns")]
    StaleWorldState { previous: i64, got: i64 },
    #[error("undeclared control '{0}'")]
    UnknownControl(String),
    #[error("no step is in error")]
    NoActiveError,
    #[error("clock skew: {0}")]
    ClockSkewDetected(String),
}

pub type Result<T, E = TaskError> = std::result::Result<T, E>;

pub const FIXTURE_CHECKLIST: &str = include_str!("../../fixtures/checklist.json");

impl ChecklistSpec {
    /// The bundled 9-procedure placeholder checklist.
    pub fn fixture() -> Self {
        Self::from_json(FIXTURE_CHECKLIST).expect("bundled checklist is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlValue {
    Number(f64),
    Text(String),
}

impl ControlValue {
    pub fn matches(&self, other: &ControlValue) -> bool {
        match (self, other) {
            (ControlValue::Number(a), ControlValue::Number(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
            (ControlValue::Text(a), ControlValue::Text(b)) => a.eq_ignore_ascii_case(b),
            _ => false,
        }
    }
}

impl From<&str> for ControlValue {
    fn from(s: &str) -> Self {
        ControlValue::Text(s.to_string())
    }
}

impl From<f64> for ControlValue {
    fn from(v: f64) -> Self {
        ControlValue::Number(v)
    }
}

impl fmt::Display for ControlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlValue::Number(v) => write!(f, "{v}"),
            ControlValue::Text(s) => f.write_str(s),
        }
    }
}

/// One control manipulation. `timestamp_ns` is when it happened at the
/// operator side, which can precede its delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub control_id: String,
    pub value: ControlValue,
    pub timestamp_ns: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub timestamp_ns: i64,
    pub parameters: BTreeMap<String, ControlValue>,
    pub gaze_target: Option<String>,
    pub last_action: Option<Action>,
}

/// Backend copy of the control panel. Delivered actions mutate it and each
/// tick it is sampled into a [`WorldState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    parameters: BTreeMap<String, ControlValue>,
    gaze_target: Option<String>,
    last_action: Option<Action>,
}

impl Panel {
    pub fn new(spec: &ChecklistSpec) -> Self {
        Self { parameters: spec.initial_parameters(), gaze_target: None, last_action: None }
    }

    pub fn apply(&mut self, action: Action) -> Result<()> {
        let slot = self.parameters.get_mut(&action.control_id).ok_or_else(|| TaskError::UnknownControl(action.control_id.clone()))?;
        *slot = action.value.clone();
        self.last_action = Some(action);
        Ok(())
    }

    pub fn set_gaze(&mut self, target: Option<String>) -> Result<()> {
        if let Some(t) = &target {
            if !self.parameters.contains_key(t) {
                return Err(TaskError::UnknownControl(t.clone()));
            }
        }
        self.gaze_target = target;
        Ok(())
    }

    pub fn parameters(&self) -> &BTreeMap<String, ControlValue> {
        &self.parameters
    }

    pub fn world_state(&self, timestamp_ns: i64) -> WorldState {
        WorldState {
            timestamp_ns,
            parameters: self.parameters.clone(),
            gaze_target: self.gaze_target.clone(),
            last_action: self.last_action.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shape() {
        let s = ChecklistSpec::fixture();
        assert_eq!(s.procedures.len(), 9);
        assert!(s.procedures.iter().all(|p| p.steps.len() == 3));
        assert_eq!(s.step_count(), 27);
        assert!(!s.distractors().is_empty());
        let targets: Vec<_> = s.steps().map(|(_, st)| st.control.as_str()).collect();
        assert!(s.distractors().iter().all(|d| !targets.contains(&d.id.as_str())));
        // no step may start out already satisfied
        let init = s.initial_parameters();
        assert!(s.steps().all(|(_, st)| !st.expect.is_satisfied(&init[&st.control])));
    }

    #[test]
    fn control_value_json_is_untagged() {
        let v: ControlValue = serde_json::from_str("\"ON\"").unwrap();
        assert_eq!(v, ControlValue::from("ON"));
        let v: ControlValue = serde_json::from_str("121.5").unwrap();
        assert_eq!(v, ControlValue::Number(121.5));
        assert_eq!(serde_json::to_string(&ControlValue::Number(3.0)).unwrap(), "3.0");
    }

    #[test]
    fn panel_rejects_unknown_controls() {
        let mut p = Panel::new(&ChecklistSpec::fixture());
        let a = Action { control_id: "nope".into(), value: "ON".into(), timestamp_ns: 0 };
        assert_eq!(p.apply(a), Err(TaskError::UnknownControl("nope".into())));
        assert!(p.set_gaze(Some("battery".into())).is_ok());
    }
}
