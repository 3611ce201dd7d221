//! Everything after the classifier: task engine, guidance policy and the
//! live false-error monitor. Live sessions and bag replay both drive this
//! one type with the same inputs in the same order, which is what makes
//! their event and guidance logs identical.

use std::sync::Arc;

use super::{sub_seed, Result};
use crate::classifier::{WorkloadHistory, WorkloadState, WorkloadVector};
use crate::policy::{
    decide_adaptive_traced, select_strategy, CognitiveContext, Condition, ContextEvent, GuidanceDecision, PromptCorpus,
    RandomPolicy, Reasoner, RuleTable, TaskContext, TranscriptEntry, WorkloadReadings, DEFAULT_REASONER_TIMEOUT,
};
use crate::task::{is_false_error, ActionAck, EngineEvent, EventKind, StepStatus, TaskEngine, TaskError, WorldState};

const STREAM_RANDOM_POLICY: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Event(EngineEvent),
    /// The decision, the backend exchange behind it (adaptive only) and
    /// the context it was made in.
    Decision(GuidanceDecision, Option<TranscriptEntry>, Box<CognitiveContext>),
}

struct OpenError {
    error_id: u64,
    step_id: String,
    timestamp_ns: i64,
    action_ns: i64,
    expected_control: String,
}

pub struct Downstream {
    engine: TaskEngine,
    condition: Condition,
    rules: RuleTable,
    corpus: PromptCorpus,
    reasoner: Arc<dyn Reasoner>,
    random: RandomPolicy,
    history: WorkloadHistory,
    gaze: Option<String>,
    acks: Vec<ActionAck>,
    open_errors: Vec<OpenError>,
    horizon_ns: i64,
}

impl Downstream {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        engine: TaskEngine,
        condition: Condition,
        rules: RuleTable,
        corpus: PromptCorpus,
        reasoner: Arc<dyn Reasoner>,
        seed: u64,
        random_singletons: bool,
        summary_span_ns: i64,
        horizon_ns: i64,
    ) -> Self {
        Self {
            engine,
            condition,
            rules,
            corpus,
            reasoner,
            random: RandomPolicy::new(sub_seed(seed, STREAM_RANDOM_POLICY, 0), random_singletons),
            history: WorkloadHistory::new(summary_span_ns),
            gaze: None,
            acks: Vec::new(),
            open_errors: Vec::new(),
            horizon_ns,
        }
    }

    pub fn engine(&self) -> &TaskEngine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut TaskEngine {
        &mut self.engine
    }

    pub fn acks(&self) -> &[ActionAck] {
        &self.acks
    }

    pub fn latest_workload(&self) -> Option<&WorkloadVector> {
        self.history.latest()
    }

    pub fn start(&mut self, t: i64) -> Result<Vec<Output>> {
        let events = self.engine.start(t)?;
        self.after_events(events)
    }

    pub fn clock(&mut self, t: i64) -> Result<Vec<Output>> {
        let events = self.engine.tick(t)?;
        self.after_events(events)
    }

    pub fn workload(&mut self, v: WorkloadVector) {
        self.history.push(v);
    }

    pub fn world_state(&mut self, ws: &WorldState) -> Result<Vec<Output>> {
        self.gaze = ws.gaze_target.clone();
        let events = self.engine.apply_world_state(ws)?;
        self.after_events(events)
    }

    /// Records a delivery acknowledgement and flags any open error it shows
    /// to have been caused by lag.
    pub fn action_ack(&mut self, ack: ActionAck) -> Result<Vec<Output>> {
        let t = ack.delivered_ns;
        self.acks.push(ack);
        let mut out = Vec::new();
        let horizon = self.horizon_ns;
        let acks = &self.acks;
        let (flagged, open): (Vec<OpenError>, Vec<OpenError>) = std::mem::take(&mut self.open_errors)
            .into_iter()
            .filter(|e| t <= e.timestamp_ns + horizon)
            .partition(|e| is_false_error(e.timestamp_ns, e.action_ns, &e.expected_control, acks, horizon));
        self.open_errors = open;
        for e in flagged {
            out.push(Output::Event(self.engine.flag_false_error(e.error_id, e.step_id, t)?));
        }
        Ok(out)
    }

    /// Operator acknowledgement of the error alert. Stale acknowledgements
    /// (the error has since cleared) are ignored and yield no events.
    pub fn error_ack(&mut self, error_id: u64, t: i64) -> Result<Vec<Output>> {
        match self.engine.acknowledge_error(error_id, t) {
            Ok(events) => self.after_events(events),
            Err(TaskError::NoActiveError) => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    fn after_events(&mut self, events: Vec<EngineEvent>) -> Result<Vec<Output>> {
        let mut out = Vec::new();
        for ev in events {
            if let EventKind::ErrorDetected { error_id, expected_step, expected_control, action_ns, .. } = &ev.kind {
                self.open_errors.push(OpenError {
                    error_id: *error_id,
                    step_id: expected_step.clone(),
                    timestamp_ns: ev.timestamp_ns,
                    action_ns: *action_ns,
                    expected_control: expected_control.clone(),
                });
            }
            let triggers = matches!(ev.kind, EventKind::GuidanceDue { .. } | EventKind::Timeout { .. } | EventKind::ErrorDetected { .. });
            let ts = ev.timestamp_ns;
            out.push(Output::Event(ev));
            if triggers && self.condition != Condition::Baseline {
                if let Some(d) = self.decide(ts)? {
                    out.push(d);
                }
            }
        }
        Ok(out)
    }

    pub fn context(&self, timestamp_ns: i64) -> Option<CognitiveContext> {
        let (proc_, step) = self.engine.active_step()?;
        let workload = match self.history.summary() {
            Ok(s) => WorkloadReadings::from_summary(&s),
            Err(_) => WorkloadReadings::uniform(WorkloadState::Optimal),
        };
        Some(CognitiveContext {
            timestamp_ns,
            workload,
            task: TaskContext {
                procedure_id: proc_.id.clone(),
                step_id: step.id.clone(),
                instruction: step.instruction.clone(),
                control: step.control.clone(),
            },
            gaze_focus: self.gaze.clone(),
            error_active: self.engine.active_status() == Some(StepStatus::Error),
            recent_events: self
                .engine
                .recent_events()
                .map(|e| ContextEvent { timestamp_ns: e.timestamp_ns, event: e.kind.name().to_string(), step_id: e.kind.step_id().map(str::to_string) })
                .collect(),
        })
    }

    fn decide(&mut self, t: i64) -> Result<Option<Output>> {
        let Some(ctx) = self.context(t) else { return Ok(None) };
        let step = self.engine.active_step().expect("context implies an active step").1.clone();
        Ok(Some(match self.condition {
            Condition::Baseline => return Ok(None),
            Condition::Random => Output::Decision(self.random.decide(t, &step)?, None, Box::new(ctx)),
            Condition::Adaptive => {
                let (d, entry) = decide_adaptive_traced(&ctx, &step, &self.rules, &self.corpus, &self.reasoner, DEFAULT_REASONER_TIMEOUT)?;
                Output::Decision(d, entry, Box::new(ctx))
            }
        }))
    }

    /// What the rule table would pick for a context carrying `truth` in
    /// place of the classifier's estimate.
    pub fn ideal(&self, ctx: &CognitiveContext, truth: [WorkloadState; 3]) -> Result<GuidanceDecision> {
        let mut c = ctx.clone();
        c.workload = WorkloadReadings::from_states(truth);
        let step = self.engine.spec().step(&ctx.task.step_id).expect("context step exists");
        Ok(select_strategy(&c, step, &self.rules)?)
    }
}
