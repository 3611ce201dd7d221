use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::{Action, ChecklistSpec, ControlValue, Procedure, Result, Step, TaskError, WorldState};

pub const SECOND_NS: i64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepStatus {
    Pending,
    Active,
    Done,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Off in the baseline condition.
    pub guidance_enabled: bool,
    pub guidance_delay_ns: i64,
    pub timeout_ns: i64,
    pub recent_events: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { guidance_enabled: true, guidance_delay_ns: 10 * SECOND_NS, timeout_ns: 20 * SECOND_NS, recent_events: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum EventKind {
    SessionStarted,
    StepCompleted {
        procedure_id: String,
        step_id: String,
    },
    ErrorDetected {
        error_id: u64,
        procedure_id: String,
        expected_step: String,
        expected_control: String,
        actual_control: String,
        actual_value: ControlValue,
        /// Operator-side time of the offending action.
        action_ns: i64,
    },
    ErrorAcknowledged {
        error_id: u64,
        step_id: String,
    },
    Timeout {
        step_id: String,
    },
    GuidanceDue {
        step_id: String,
    },
    FalseErrorSuspected {
        error_id: u64,
        step_id: String,
    },
    ChecklistComplete,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionStarted => "SessionStarted",
            EventKind::StepCompleted { .. } => "StepCompleted",
            EventKind::ErrorDetected { .. } => "ErrorDetected",
            EventKind::ErrorAcknowledged { .. } => "ErrorAcknowledged",
            EventKind::Timeout { .. } => "Timeout",
            EventKind::GuidanceDue { .. } => "GuidanceDue",
            EventKind::FalseErrorSuspected { .. } => "FalseErrorSuspected",
            EventKind::ChecklistComplete => "ChecklistComplete",
        }
    }

    pub fn step_id(&self) -> Option<&str> {
        match self {
            EventKind::StepCompleted { step_id, .. }
            | EventKind::ErrorAcknowledged { step_id, .. }
            | EventKind::Timeout { step_id }
            | EventKind::GuidanceDue { step_id }
            | EventKind::FalseErrorSuspected { step_id, .. } => Some(step_id),
            EventKind::ErrorDetected { expected_step, .. } => Some(expected_step),
            EventKind::SessionStarted | EventKind::ChecklistComplete => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub timestamp_ns: i64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardView {
    pub error_id: u64,
    pub procedure_id: String,
    pub expected_step: String,
    pub expected_control: String,
    pub corrective_instruction: String,
    pub alert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    pub id: String,
    pub instruction: String,
    pub control: String,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSnapshot {
    pub id: String,
    pub title: String,
    pub steps: Vec<StepSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistSnapshot {
    pub timestamp_ns: i64,
    pub procedures: Vec<ProcedureSnapshot>,
    pub active_step: Option<String>,
    pub done_count: usize,
    pub total_steps: usize,
    pub complete: bool,
}

/// Task tree plus timers. All time comes from the timestamps passed in.
#[derive(Debug, Clone)]
pub struct TaskEngine {
    spec: ChecklistSpec,
    cfg: EngineConfig,
    /// (procedure index, step index) in checklist order.
    order: Vec<(usize, usize)>,
    status: Vec<StepStatus>,
    active: Option<usize>,
    done_count: usize,
    now: Option<i64>,
    started: bool,
    last_action: Option<Action>,
    timeout_deadline: Option<i64>,
    guidance_deadline: Option<i64>,
    current_error: Option<u64>,
    next_error_id: u64,
    alert_pending: bool,
    recent: VecDeque<EngineEvent>,
}

impl TaskEngine {
    pub fn new(spec: ChecklistSpec, cfg: EngineConfig) -> Result<Self> {
        spec.validate()?;
        let order: Vec<(usize, usize)> = spec
            .procedures
            .iter()
            .enumerate()
            .flat_map(|(p, proc_)| (0..proc_.steps.len()).map(move |s| (p, s)))
            .collect();
        let mut status = vec![StepStatus::Pending; order.len()];
        status[0] = StepStatus::Active;
        Ok(Self {
            spec,
            cfg,
            order,
            status,
            active: Some(0),
            done_count: 0,
            now: None,
            started: false,
            last_action: None,
            timeout_deadline: None,
            guidance_deadline: None,
            current_error: None,
            next_error_id: 0,
            alert_pending: false,
            recent: VecDeque::new(),
        })
    }

    pub fn spec(&self) -> &ChecklistSpec {
        &self.spec
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn is_complete(&self) -> bool {
        self.active.is_none()
    }

    pub fn done_count(&self) -> usize {
        self.done_count
    }

    pub fn now(&self) -> Option<i64> {
        self.now
    }

    pub fn statuses(&self) -> &[StepStatus] {
        &self.status
    }

    pub fn recent_events(&self) -> impl Iterator<Item = &EngineEvent> {
        self.recent.iter()
    }

    fn step_at(&self, i: usize) -> (&Procedure, &Step) {
        let (p, s) = self.order[i];
        let proc_ = &self.spec.procedures[p];
        (proc_, &proc_.steps[s])
    }

    pub fn active_step(&self) -> Option<(&Procedure, &Step)> {
        self.active.map(|i| self.step_at(i))
    }

    /// Id of the error the active step is currently in, if any.
    pub fn current_error(&self) -> Option<u64> {
        self.current_error.filter(|_| self.active_status() == Some(StepStatus::Error))
    }

    pub fn active_status(&self) -> Option<StepStatus> {
        self.active.map(|i| self.status[i])
    }

    pub fn status_of(&self, step_id: &str) -> Option<StepStatus> {
        (0..self.order.len()).find(|&i| self.step_at(i).1.id == step_id).map(|i| self.status[i])
    }

    fn advance_time(&mut self, t: i64) -> Result<()> {
        if let Some(prev) = self.now {
            if t < prev {
                return Err(TaskError::StaleWorldState { previous: prev, got: t });
            }
        }
        self.now = Some(t);
        Ok(())
    }

    fn emit(&mut self, out: &mut Vec<EngineEvent>, timestamp_ns: i64, kind: EventKind) {
        let ev = EngineEvent { timestamp_ns, kind };
        self.recent.push_back(ev.clone());
        while self.recent.len() > self.cfg.recent_events {
            self.recent.pop_front();
        }
        out.push(ev);
    }

    /// Arms both timers at session start.
    pub fn start(&mut self, t: i64) -> Result<Vec<EngineEvent>> {
        self.advance_time(t)?;
        let mut out = Vec::new();
        if self.started {
            return Ok(out);
        }
        self.started = true;
        self.timeout_deadline = Some(t + self.cfg.timeout_ns);
        if self.cfg.guidance_enabled {
            self.guidance_deadline = Some(t + self.cfg.guidance_delay_ns);
        }
        self.emit(&mut out, t, EventKind::SessionStarted);
        Ok(out)
    }

    pub fn apply_world_state(&mut self, ws: &WorldState) -> Result<Vec<EngineEvent>> {
        self.advance_time(ws.timestamp_ns)?;
        let t = ws.timestamp_ns;
        let mut out = Vec::new();
        let fresh = ws.last_action.as_ref().filter(|a| self.last_action.as_ref() != Some(*a)).cloned();
        if let Some(action) = fresh {
            self.last_action = Some(action.clone());
            if self.started && self.active.is_some() {
                self.timeout_deadline = Some(t + self.cfg.timeout_ns);
            }
            self.judge_action(&action, ws, t, &mut out);
        }
        self.complete_satisfied(ws, t, &mut out);
        Ok(out)
    }

    fn judge_action(&mut self, action: &Action, ws: &WorldState, t: i64, out: &mut Vec<EngineEvent>) {
        let Some(i) = self.active else { return };
        let (proc_, step) = self.step_at(i);
        let on_target = action.control_id == step.control;
        let wrong = if on_target {
            step.wrong_value_is_error && !ws.parameters.get(&step.control).is_some_and(|v| step.expect.is_satisfied(v))
        } else {
            let done_control = (0..self.order.len())
                .any(|j| self.status[j] == StepStatus::Done && self.step_at(j).1.control == action.control_id);
            !done_control
        };
        if !wrong {
            return;
        }
        let kind = EventKind::ErrorDetected {
            error_id: self.next_error_id,
            procedure_id: proc_.id.clone(),
            expected_step: step.id.clone(),
            expected_control: step.control.clone(),
            actual_control: action.control_id.clone(),
            actual_value: action.value.clone(),
            action_ns: action.timestamp_ns,
        };
        self.current_error = Some(self.next_error_id);
        self.next_error_id += 1;
        self.status[i] = StepStatus::Error;
        self.alert_pending = true;
        self.emit(out, t, kind);
    }

    fn complete_satisfied(&mut self, ws: &WorldState, t: i64, out: &mut Vec<EngineEvent>) {
        while let Some(i) = self.active {
            let (proc_, step) = self.step_at(i);
            if !ws.parameters.get(&step.control).is_some_and(|v| step.expect.is_satisfied(v)) {
                break;
            }
            let kind = EventKind::StepCompleted { procedure_id: proc_.id.clone(), step_id: step.id.clone() };
            self.status[i] = StepStatus::Done;
            self.done_count += 1;
            self.current_error = None;
            self.alert_pending = false;
            self.emit(out, t, kind);
            if i + 1 < self.order.len() {
                self.active = Some(i + 1);
                self.status[i + 1] = StepStatus::Active;
                if self.cfg.guidance_enabled && self.started {
                    self.guidance_deadline = Some(t + self.cfg.guidance_delay_ns);
                }
            } else {
                self.active = None;
                self.timeout_deadline = None;
                self.guidance_deadline = None;
                self.emit(out, t, EventKind::ChecklistComplete);
            }
        }
    }

    /// Fires once per arm, `guidance_delay_ns` after session start or the
    /// latest completion. Stamped with the due time itself.
    pub fn guidance_cadence(&mut self, now: i64) -> Result<Option<EngineEvent>> {
        self.advance_time(now)?;
        match (self.guidance_deadline, self.active) {
            (Some(due), Some(i)) if due <= now => {
                self.guidance_deadline = None;
                let step_id = self.step_at(i).1.id.clone();
                let mut out = Vec::new();
                self.emit(&mut out, due, EventKind::GuidanceDue { step_id });
                Ok(out.pop())
            }
            _ => Ok(None),
        }
    }

    /// Fires `timeout_ns` after the latest action (or start) and again
    /// every `timeout_ns` of continued inaction.
    pub fn timeout_check(&mut self, now: i64) -> Result<Option<EngineEvent>> {
        self.advance_time(now)?;
        match (self.timeout_deadline, self.active) {
            (Some(due), Some(i)) if due <= now => {
                self.timeout_deadline = Some(due + self.cfg.timeout_ns);
                let step_id = self.step_at(i).1.id.clone();
                let mut out = Vec::new();
                self.emit(&mut out, due, EventKind::Timeout { step_id });
                Ok(out.pop())
            }
            _ => Ok(None),
        }
    }

    /// Clock tick: guidance before timeout, as guidance is armed earlier.
    pub fn tick(&mut self, now: i64) -> Result<Vec<EngineEvent>> {
        let mut out = Vec::new();
        if let Some(e) = self.guidance_cadence(now)? {
            out.push(e);
        }
        while let Some(e) = self.timeout_check(now)? {
            out.push(e);
        }
        Ok(out)
    }

    pub fn acknowledge_error(&mut self, error_id: u64, t: i64) -> Result<Vec<EngineEvent>> {
        self.advance_time(t)?;
        match (self.active, self.current_error) {
            (Some(i), Some(id)) if id == error_id && self.status[i] == StepStatus::Error => {
                self.status[i] = StepStatus::Active;
                self.current_error = None;
                self.alert_pending = false;
                let step_id = self.step_at(i).1.id.clone();
                let mut out = Vec::new();
                self.emit(&mut out, t, EventKind::ErrorAcknowledged { error_id, step_id });
                Ok(out)
            }
            _ => Err(TaskError::NoActiveError),
        }
    }

    /// Records that an earlier error was attributed to delivery lag.
    pub fn flag_false_error(&mut self, error_id: u64, step_id: String, t: i64) -> Result<EngineEvent> {
        self.advance_time(t)?;
        let mut out = Vec::new();
        self.emit(&mut out, t, EventKind::FalseErrorSuspected { error_id, step_id });
        Ok(out.pop().expect("just emitted"))
    }

    /// Corrective view while the active step is in error. The alert flag is
    /// edge-triggered: true only on the first read after a new error.
    pub fn error_dashboard_state(&mut self) -> Result<DashboardView> {
        let (Some(i), Some(error_id)) = (self.active, self.current_error) else {
            return Err(TaskError::NoActiveError);
        };
        if self.status[i] != StepStatus::Error {
            return Err(TaskError::NoActiveError);
        }
        let alert = std::mem::take(&mut self.alert_pending);
        let (proc_, step) = self.step_at(i);
        Ok(DashboardView {
            error_id,
            procedure_id: proc_.id.clone(),
            expected_step: step.id.clone(),
            expected_control: step.control.clone(),
            corrective_instruction: step.instruction.clone(),
            alert,
        })
    }

    pub fn snapshot(&self) -> ChecklistSnapshot {
        let mut k = 0;
        let procedures = self
            .spec
            .procedures
            .iter()
            .map(|p| ProcedureSnapshot {
                id: p.id.clone(),
                title: p.title.clone(),
                steps: p
                    .steps
                    .iter()
                    .map(|s| {
                        let status = self.status[k];
                        k += 1;
                        StepSnapshot { id: s.id.clone(), instruction: s.instruction.clone(), control: s.control.clone(), status }
                    })
                    .collect(),
            })
            .collect();
        ChecklistSnapshot {
            timestamp_ns: self.now.unwrap_or(0),
            procedures,
            active_step: self.active_step().map(|(_, s)| s.id.clone()),
            done_count: self.done_count,
            total_steps: self.order.len(),
            complete: self.is_complete(),
        }
    }
}
