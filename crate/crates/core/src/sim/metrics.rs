use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::session::{FrontendAck, SessionConfig, SessionRecord, SessionStatus, TruthRecord};
use super::{Result, SimError};
use crate::bus::{Bag, Topic};
use crate::classifier::{Facet, WorkloadState, WorkloadVector};
use crate::policy::{Condition, GuidanceDecision, ModalitySet};
use crate::task::{ActionAck, EngineEvent, EventKind};

/// Rule-table choice under the true workload for one guidance decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Need {
    pub step_id: String,
    pub ideal: ModalitySet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricContext {
    pub session_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub total_steps: usize,
    /// Procedure ids with their step counts, in checklist order.
    pub procedures: Vec<(String, usize)>,
    pub task_start_ns: i64,
    pub end_ns: i64,
    pub status: SessionStatus,
}

impl MetricContext {
    pub fn new(cfg: &SessionConfig, task_start_ns: i64, end_ns: i64, status: SessionStatus) -> Self {
        Self {
            session_id: cfg.session_id(),
            condition: cfg.condition,
            seed: cfg.seed,
            total_steps: cfg.checklist.step_count(),
            procedures: cfg.checklist.procedures.iter().map(|p| (p.id.clone(), p.steps.len())).collect(),
            task_start_ns,
            end_ns,
            status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub status: SessionStatus,
    pub duration_s: f64,
    pub steps_completed: usize,
    pub total_steps: usize,
    pub actions: usize,
    pub errors_detected: usize,
    pub false_errors: usize,
    /// Detected errors not flagged as lag artefacts.
    pub errors: usize,
    /// Flagged false errors per delivered action.
    pub false_error_rate: f64,
    pub timeouts: usize,
    pub guidance_count: usize,
    /// Share of guidance whose modalities equal the true-state rule choice.
    pub guided_match_rate: Option<f64>,
    pub visual_only_share: Option<f64>,
    pub mean_lag_ms: Option<f64>,
    pub guidance_by_modality: BTreeMap<String, usize>,
    pub guidance_by_load: BTreeMap<String, usize>,
    /// Classifier outputs during the task.
    pub workload_samples: usize,
    /// Per facet (memory, attention, perception): outputs labelled optimal.
    pub optimal_ticks: [usize; 3],
    pub optimal_incidence: [f64; 3],
    /// Seconds spent on each finished procedure, measured from the end of
    /// the previous one.
    pub procedure_times_s: Vec<ProcedureTime>,
    /// Sum of the procedure times.
    pub completion_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureTime {
    pub procedure_id: String,
    pub seconds: f64,
}

fn procedure_times(ctx: &MetricContext, events: &[EngineEvent]) -> Vec<ProcedureTime> {
    let mut done: BTreeMap<&str, (usize, i64)> = BTreeMap::new();
    for e in events {
        if let EventKind::StepCompleted { procedure_id, .. } = &e.kind {
            let d = done.entry(procedure_id.as_str()).or_insert((0, 0));
            d.0 += 1;
            d.1 = d.1.max(e.timestamp_ns);
        }
    }
    let mut prev = ctx.task_start_ns;
    let mut out = Vec::new();
    for (id, n) in &ctx.procedures {
        match done.get(id.as_str()) {
            Some(&(k, end)) if k >= *n => {
                out.push(ProcedureTime { procedure_id: id.clone(), seconds: (end - prev) as f64 / 1e9 });
                prev = end;
            }
            _ => break,
        }
    }
    out
}

fn share(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(
    ctx: &MetricContext,
    events: &[EngineEvent],
    acks: &[ActionAck],
    workload: &[WorkloadVector],
    guidance: &[GuidanceDecision],
    needs: &[Need],
) -> Result<SessionMetrics> {
    if guidance.len() != needs.len() {
        return Err(SimError::Replay(format!("{} decisions but {} need records", guidance.len(), needs.len())));
    }
    let count = |f: fn(&EventKind) -> bool| events.iter().filter(|e| f(&e.kind)).count();
    let errors_detected = count(|k| matches!(k, EventKind::ErrorDetected { .. }));
    let false_errors = count(|k| matches!(k, EventKind::FalseErrorSuspected { .. }));
    let matched = guidance.iter().zip(needs).filter(|(d, n)| d.step_id == n.step_id && d.modalities == n.ideal).count();
    let visual_only = guidance.iter().filter(|d| d.modalities == ModalitySet::VISUAL).count();
    let task: Vec<&WorkloadVector> = workload.iter().filter(|v| v.timestamp_ns >= ctx.task_start_ns).collect();
    let optimal_ticks = Facet::ALL.map(|f| task.iter().filter(|v| v.facet(f).state == WorkloadState::Optimal).count());
    let mut by_modality = BTreeMap::new();
    let mut by_load = BTreeMap::new();
    for d in guidance {
        *by_modality.entry(d.modalities.to_string()).or_insert(0) += 1;
        *by_load.entry(d.load.to_string()).or_insert(0) += 1;
    }
    let procedure_times_s = procedure_times(ctx, events);
    Ok(SessionMetrics {
        session_id: ctx.session_id.clone(),
        condition: ctx.condition,
        seed: ctx.seed,
        status: ctx.status,
        duration_s: (ctx.end_ns - ctx.task_start_ns) as f64 / 1e9,
        steps_completed: count(|k| matches!(k, EventKind::StepCompleted { .. })),
        total_steps: ctx.total_steps,
        actions: acks.len(),
        errors_detected,
        false_errors,
        errors: errors_detected - false_errors,
        false_error_rate: share(false_errors, acks.len()).unwrap_or(0.0),
        timeouts: count(|k| matches!(k, EventKind::Timeout { .. })),
        guidance_count: guidance.len(),
        guided_match_rate: share(matched, guidance.len()),
        visual_only_share: share(visual_only, guidance.len()),
        mean_lag_ms: (!acks.is_empty()).then(|| acks.iter().map(|a| a.lag_ns() as f64).sum::<f64>() / acks.len() as f64 / 1e6),
        guidance_by_modality: by_modality,
        guidance_by_load: by_load,
        workload_samples: task.len(),
        optimal_ticks,
        optimal_incidence: optimal_ticks.map(|k| share(k, task.len()).unwrap_or(0.0)),
        completion_time_s: procedure_times_s.iter().map(|p| p.seconds).sum(),
        procedure_times_s,
    })
}

/// Decoded contents of a session bag.
pub(crate) struct BagContents {
    pub config: SessionConfig,
    pub task_start_ns: i64,
    pub end: Option<(i64, SessionStatus)>,
    pub events: Vec<EngineEvent>,
    pub acks: Vec<ActionAck>,
    pub workload: Vec<WorkloadVector>,
    pub guidance: Vec<GuidanceDecision>,
    pub needs: Vec<Need>,
}

pub(crate) fn read_bag(bag: &Bag) -> Result<BagContents> {
    let mut config = None;
    let mut task_start_ns = None;
    let mut c = BagContents {
        config: SessionConfig::new(Condition::Baseline, 0),
        task_start_ns: 0,
        end: None,
        events: Vec::new(),
        acks: Vec::new(),
        workload: Vec::new(),
        guidance: Vec::new(),
        needs: Vec::new(),
    };
    for r in &bag.records {
        match r.topic {
            Topic::Session => match r.decode::<SessionRecord>()? {
                SessionRecord::Started { config: cfg, .. } => config = Some(*cfg),
                SessionRecord::Calibrated { .. } => task_start_ns = Some(r.timestamp_ns),
                SessionRecord::Ended { status } => c.end = Some((r.timestamp_ns, status)),
                SessionRecord::Exchange { .. } => {}
            },
            Topic::EngineEvents => c.events.push(r.decode()?),
            Topic::FrontendAcks => {
                if let FrontendAck::Action(a) = r.decode()? {
                    c.acks.push(a);
                }
            }
            Topic::Workload => c.workload.push(r.decode()?),
            Topic::Guidance => c.guidance.push(r.decode()?),
            Topic::Truth => {
                if let TruthRecord::Need { step_id, ideal } = r.decode()? {
                    c.needs.push(Need { step_id, ideal });
                }
            }
            _ => {}
        }
    }
    c.config = config.ok_or_else(|| SimError::Replay("bag has no session header".into()))?;
    c.task_start_ns = task_start_ns.ok_or_else(|| SimError::Replay("bag has no calibration record".into()))?;
    Ok(c)
}

/// Metrics recomputed from a recorded session alone.
pub fn metrics_from_bag(bag: &Bag) -> Result<SessionMetrics> {
    let c = read_bag(bag)?;
    let (end_ns, status) = c.end.ok_or_else(|| SimError::Replay("bag has no end record".into()))?;
    let ctx = MetricContext::new(&c.config, c.task_start_ns, end_ns, status);
    compute_metrics(&ctx, &c.events, &c.acks, &c.workload, &c.guidance, &c.needs)
}
