use std::sync::Arc;

use super::downstream::Output;
use super::metrics::{compute_metrics, read_bag, MetricContext, SessionMetrics};
use super::session::{downstream_for, FrontendAck, SessionRecord};
use super::{Result, SimError};
use crate::bus::{Bag, ClockTick, Topic};
use crate::policy::{Reasoner, RuleTableReasoner, ScriptedReasoner};
use crate::task::{EngineEvent, WorldState};
use crate::policy::GuidanceDecision;

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub events: Vec<EngineEvent>,
    pub guidance: Vec<GuidanceDecision>,
    /// Metrics over the replayed logs, with acknowledgements, workload and
    /// need records taken from the bag.
    pub metrics: Option<SessionMetrics>,
}

impl ReplayOutcome {
    pub fn event_log(&self) -> Vec<u8> {
        super::event_log_bytes(&self.events)
    }

    pub fn guidance_log(&self) -> Vec<u8> {
        super::guidance_log_bytes(&self.guidance)
    }
}

/// Re-runs the task engine and guidance policy over a recorded session.
/// Inputs are fed in recorded order; reasoner replies come from the
/// recorded exchanges, so no backend is contacted.
pub fn replay_session(bag: &Bag) -> Result<ReplayOutcome> {
    let contents = read_bag(bag)?;
    let cfg = &contents.config;
    let entries: Vec<_> = bag
        .on(Topic::Session)
        .filter_map(|r| match r.decode::<SessionRecord>() {
            Ok(SessionRecord::Exchange { entry }) => Some(Ok(entry)),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<std::result::Result<_, _>>()?;
    let reasoner: Arc<dyn Reasoner> = if entries.is_empty() {
        Arc::new(RuleTableReasoner::new(cfg.rules.clone()))
    } else {
        Arc::new(ScriptedReasoner::new(&entries))
    };
    let mut down = downstream_for(cfg, reasoner)?;
    let mut events = Vec::new();
    let mut guidance = Vec::new();
    let mut started = false;
    for r in &bag.records {
        let outs = match r.topic {
            Topic::Session => match r.decode::<SessionRecord>()? {
                SessionRecord::Calibrated { .. } => {
                    started = true;
                    down.start(r.timestamp_ns)?
                }
                _ => continue,
            },
            _ if !started => continue,
            Topic::Clock => down.clock(r.decode::<ClockTick>()?.timestamp_ns)?,
            Topic::Workload => {
                down.workload(r.decode()?);
                continue;
            }
            Topic::WorldState => down.world_state(&r.decode::<WorldState>()?)?,
            Topic::FrontendAcks => match r.decode::<FrontendAck>()? {
                FrontendAck::Action(a) => down.action_ack(a)?,
                FrontendAck::ErrorAck { error_id } => down.error_ack(error_id, r.timestamp_ns)?,
            },
            _ => continue,
        };
        for o in outs {
            match o {
                Output::Event(e) => events.push(e),
                Output::Decision(d, ..) => guidance.push(d),
            }
        }
    }
    if !started {
        return Err(SimError::Replay("session never left calibration".into()));
    }
    let metrics = match contents.end {
        Some((end_ns, status)) => {
            let ctx = MetricContext::new(cfg, contents.task_start_ns, end_ns, status);
            Some(compute_metrics(&ctx, &events, &contents.acks, &contents.workload, &guidance, &contents.needs)?)
        }
        None => None,
    };
    Ok(ReplayOutcome { events, guidance, metrics })
}
