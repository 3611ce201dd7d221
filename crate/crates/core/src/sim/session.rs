use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::downstream::{Downstream, Output};
use super::metrics::{compute_metrics, MetricContext, Need, SessionMetrics};
use super::{AgentConfig, FnirsGenerator, GeneratorConfig, LagBridge, LagConfig, LoadScript, PilotAgent, Result, SimError};
use crate::bus::{Bag, Bus, SessionClock, Topic};
use crate::classifier::{extract_raw_features, FacetModels, FeatureBaseline, FeatureSpec, WorkloadClassifier, WorkloadState, WorkloadVector};
use crate::policy::{Condition, GuidanceDecision, ModalitySet, PromptCorpus, Reasoner, RuleTable, RuleTableReasoner, TranscriptEntry};
use crate::signal::{calibrate_baseline, BaselineStats, HemoSample, Pipeline, PipelineConfig, RawFrame};
use crate::task::{
    write_event_log, Action, ActionAck, ChecklistSpec, DashboardView, EngineConfig, EngineEvent, EventKind, Panel, TaskEngine,
    SECOND_NS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Complete,
    /// The time cap ran out first; the session is logged as incomplete.
    TimeCapExceeded,
}

/// Who operates the panel. Exactly one driver per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Driver {
    Agent(AgentConfig),
    /// Actions arrive from a console over the gateway.
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub condition: Condition,
    pub seed: u64,
    pub checklist: ChecklistSpec,
    pub rules: RuleTable,
    pub script: LoadScript,
    pub driver: Driver,
    pub lag: LagConfig,
    pub pipeline: PipelineConfig,
    pub generator: GeneratorConfig,
    pub engine: EngineConfig,
    pub calibration_s: f64,
    pub time_cap_s: f64,
    /// How long after an error a late acknowledgement still marks it false.
    pub false_error_horizon_s: f64,
    /// Span of the rolling workload summary handed to the policy.
    pub summary_span_s: f64,
    /// Random condition draws single modalities only.
    pub random_singletons: bool,
}

impl SessionConfig {
    /// Bundled checklist and rules, the task-coupled load script, an
    /// experienced agent and no delivery lag.
    pub fn new(condition: Condition, seed: u64) -> Self {
        Self {
            condition,
            seed,
            checklist: ChecklistSpec::fixture(),
            rules: RuleTable::fixture(),
            script: LoadScript::preset("task_coupled").expect("preset exists"),
            driver: Driver::Agent(AgentConfig::experienced()),
            lag: LagConfig::none(),
            pipeline: PipelineConfig::default(),
            generator: GeneratorConfig::default(),
            engine: EngineConfig::default(),
            calibration_s: 30.0,
            time_cap_s: 1800.0,
            false_error_horizon_s: 2.0,
            summary_span_s: 2.0,
            random_singletons: false,
        }
    }

    pub fn session_id(&self) -> String {
        format!("{}-{:016x}", self.condition, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.checklist.validate()?;
        self.rules.validate()?;
        self.script.validate()?;
        if let Driver::Agent(a) = &self.driver {
            a.validate()?;
        }
        self.lag.validate()?;
        self.pipeline.validate()?;
        let min_cal = (2 * self.pipeline.window_len()) as f64 / self.pipeline.sample_rate_hz;
        if self.calibration_s < min_cal {
            return Err(SimError::Config(format!("calibration needs at least {min_cal} s")));
        }
        if !(self.time_cap_s > 0.0 && self.false_error_horizon_s >= 0.0 && self.summary_span_s > 0.0) {
            return Err(SimError::Config("time cap, horizon and summary span must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn engine_config(&self) -> EngineConfig {
        EngineConfig { guidance_enabled: self.condition != Condition::Baseline, ..self.engine.clone() }
    }

    pub fn tick_ns(&self) -> i64 {
        self.pipeline.sample_period_ns()
    }
}

/// Payloads of the `session` topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum SessionRecord {
    Started { session_id: String, config: Box<SessionConfig>, models_sha256: String },
    /// Calibration finished; the task starts at this record's timestamp.
    Calibrated { intensity: BaselineStats, features: FeatureBaseline },
    Exchange { entry: TranscriptEntry },
    Ended { status: SessionStatus },
}

/// Payloads of the `truth` topic: what the script made the simulated
/// pilot experience, never visible to the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TruthRecord {
    States { states: [WorkloadState; 3] },
    /// The rule-table choice for the true states, recorded next to each
    /// guidance decision.
    Need { step_id: String, ideal: ModalitySet },
}

/// Payloads of the `frontend_acks` topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrontendAck {
    Action(ActionAck),
    ErrorAck { error_id: u64 },
}

/// What one step of the loop produced, for whoever drives it.
#[derive(Debug, Clone, Default)]
pub struct TickReport {
    pub events: Vec<EngineEvent>,
    pub decisions: Vec<(GuidanceDecision, ModalitySet)>,
    pub workload: Option<WorkloadVector>,
    pub alert: Option<DashboardView>,
}

impl TickReport {
    fn absorb(&mut self, other: TickReport) {
        self.events.extend(other.events);
        self.decisions.extend(other.decisions);
        self.workload = other.workload.or(self.workload.take());
        self.alert = other.alert.or(self.alert.take());
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub bag: Bag,
    pub events: Vec<EngineEvent>,
    pub guidance: Vec<GuidanceDecision>,
    pub metrics: SessionMetrics,
}

impl SessionOutcome {
    pub fn event_log(&self) -> Vec<u8> {
        event_log_bytes(&self.events)
    }

    pub fn guidance_log(&self) -> Vec<u8> {
        guidance_log_bytes(&self.guidance)
    }
}

pub fn event_log_bytes(events: &[EngineEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_event_log(&mut buf, events).expect("writing to memory");
    buf
}

pub fn guidance_log_bytes(decisions: &[GuidanceDecision]) -> Vec<u8> {
    let mut buf = Vec::new();
    for d in decisions {
        buf.extend(serde_json::to_vec(d).expect("decision serializes"));
        buf.push(b'\n');
    }
    buf
}

pub fn models_digest(models: &FacetModels) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for m in [&models.memory, &models.attention, &models.perception] {
        h.update(m.to_text().as_bytes());
    }
    hex::encode(h.finalize())
}

pub(crate) fn downstream_for(cfg: &SessionConfig, reasoner: Arc<dyn Reasoner>) -> Result<Downstream> {
    let engine = TaskEngine::new(cfg.checklist.clone(), cfg.engine_config())?;
    Ok(Downstream::new(
        engine,
        cfg.condition,
        cfg.rules.clone(),
        PromptCorpus::fixture(),
        reasoner,
        cfg.seed,
        cfg.random_singletons,
        (cfg.summary_span_s * 1e9) as i64,
        (cfg.false_error_horizon_s * 1e9) as i64,
    ))
}

pub(crate) struct Calibration {
    pub intensity: BaselineStats,
    pub features: FeatureBaseline,
    pub pipeline: Pipeline,
    /// Pipeline output over the rest frames.
    pub hemo: Vec<HemoSample>,
    pub task_start_ns: i64,
}

/// Rest period at the start of every session: intensity baseline, feature
/// z-scoring statistics, and a pipeline already warmed on the rest frames.
pub(crate) fn calibrate(
    generator: &mut FnirsGenerator,
    pcfg: &PipelineConfig,
    calibration_s: f64,
    spec: &FeatureSpec,
    mut sink: impl FnMut(&RawFrame) -> Result<()>,
) -> Result<Calibration> {
    let tick = pcfg.sample_period_ns();
    let cal_n = (calibration_s * pcfg.sample_rate_hz).round() as i64;
    let mut frames: Vec<RawFrame> = Vec::with_capacity(cal_n as usize);
    for k in 0..cal_n {
        let f = generator.frame(k * tick, None);
        sink(&f)?;
        frames.push(f);
    }
    let intensity = calibrate_baseline(&frames, pcfg)?;
    let mut pipeline = Pipeline::new(pcfg.clone(), intensity.clone())?;
    let mut hemo = Vec::new();
    for f in frames {
        hemo.extend(pipeline.push(f)?);
    }
    let raw: Vec<_> = hemo.windows(spec.window_len).map(|w| extract_raw_features(w, spec)).collect::<std::result::Result<_, _>>()?;
    let features = FeatureBaseline::from_raw(&raw)?;
    Ok(Calibration { intensity, features, pipeline, hemo, task_start_ns: cal_n * tick })
}

/// One closed-loop session on its own bus, recorded from the first frame.
/// Drivers (the simulated agent or the gateway's human bridge) call
/// [`begin_tick`](Self::begin_tick) and then [`deliver`](Self::deliver) once
/// per tick, plus [`error_ack`](Self::error_ack) when the operator
/// acknowledges an alert.
pub struct SessionCore {
    cfg: SessionConfig,
    bus: Bus,
    clock: SessionClock,
    panel: Panel,
    generator: FnirsGenerator,
    pipeline: Pipeline,
    classifier: WorkloadClassifier,
    down: Downstream,
    task_start_ns: i64,
    truth: Option<[WorkloadState; 3]>,
    events: Vec<EngineEvent>,
    decisions: Vec<GuidanceDecision>,
    needs: Vec<Need>,
    workload: Vec<WorkloadVector>,
    last_t: i64,
}

impl SessionCore {
    /// Publishes the session header, runs calibration at rest and starts
    /// the task engine.
    pub fn new(cfg: SessionConfig, models: &FacetModels, reasoner: Option<Arc<dyn Reasoner>>) -> Result<Self> {
        cfg.validate()?;
        let bus = Bus::default();
        bus.start_record(None);
        let session_id = cfg.session_id();
        bus.publish_json(
            Topic::Session,
            0,
            &SessionRecord::Started { session_id, config: Box::new(cfg.clone()), models_sha256: models_digest(models) },
        )?;
        let mut generator = FnirsGenerator::new(&cfg.pipeline, cfg.generator.clone(), &cfg.script, cfg.seed)?;
        let cal = calibrate(&mut generator, &cfg.pipeline, cfg.calibration_s, &models.memory.feature_spec, |f| {
            bus.publish_json(Topic::RawFnirs, f.timestamp_ns, f).map(|_| ()).map_err(SimError::from)
        })?;
        let Calibration { intensity, features, pipeline, hemo, task_start_ns } = cal;
        // Warm the classifier's window on rest data; its outputs are dropped.
        let mut classifier = WorkloadClassifier::new(models.clone(), features.clone())?;
        for h in hemo {
            classifier.push(h)?;
        }
        bus.publish_json(Topic::Session, task_start_ns, &SessionRecord::Calibrated { intensity, features })?;

        let reasoner = reasoner.unwrap_or_else(|| Arc::new(RuleTableReasoner::new(cfg.rules.clone())));
        let mut down = downstream_for(&cfg, reasoner)?;
        let started = down.start(task_start_ns)?;
        let mut core = Self {
            panel: Panel::new(&cfg.checklist),
            clock: SessionClock::new(task_start_ns),
            generator,
            pipeline,
            classifier,
            down,
            task_start_ns,
            truth: None,
            events: Vec::new(),
            decisions: Vec::new(),
            needs: Vec::new(),
            workload: Vec::new(),
            last_t: task_start_ns,
            bus,
            cfg,
        };
        core.publish_outputs(started, task_start_ns)?;
        Ok(core)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn task_start_ns(&self) -> i64 {
        self.task_start_ns
    }

    pub fn tick_ns(&self) -> i64 {
        self.cfg.tick_ns()
    }

    pub fn is_complete(&self) -> bool {
        self.down.engine().is_complete()
    }

    pub fn engine(&self) -> &TaskEngine {
        self.down.engine()
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn time_cap_reached(&self, t: i64) -> bool {
        t - self.task_start_ns >= (self.cfg.time_cap_s * 1e9) as i64
    }

    fn truth_at(&self, t: i64) -> [WorkloadState; 3] {
        let tags = self.down.engine().active_step().map(|(_, s)| s.tags.clone()).unwrap_or_default();
        self.cfg.script.states_at((t - self.task_start_ns) as f64 / SECOND_NS as f64, &tags)
    }

    fn publish_outputs(&mut self, outs: Vec<Output>, t: i64) -> Result<TickReport> {
        let mut report = TickReport::default();
        for o in outs {
            match o {
                Output::Event(e) => {
                    self.bus.publish_json(Topic::EngineEvents, e.timestamp_ns, &e)?;
                    self.events.push(e.clone());
                    report.events.push(e);
                }
                Output::Decision(d, entry, ctx) => {
                    self.bus.publish_json(Topic::Guidance, d.timestamp_ns, &d)?;
                    if let Some(entry) = entry {
                        self.bus.publish_json(Topic::Session, d.timestamp_ns, &SessionRecord::Exchange { entry })?;
                    }
                    let truth = self.truth.unwrap_or_else(|| self.truth_at(t));
                    let ideal = self.down.ideal(&ctx, truth)?.modalities;
                    self.bus.publish_json(Topic::Truth, d.timestamp_ns, &TruthRecord::Need { step_id: d.step_id.clone(), ideal })?;
                    self.needs.push(Need { step_id: d.step_id.clone(), ideal });
                    self.decisions.push(d.clone());
                    report.decisions.push((d, ideal));
                }
            }
        }
        Ok(report)
    }

    /// Advances the clock and timers, then runs one fNIRS frame through the
    /// pipeline and classifier.
    pub fn begin_tick(&mut self, t: i64) -> Result<TickReport> {
        let tick = self.clock.advance_to(t)?;
        self.last_t = t;
        self.bus.publish_json(Topic::Clock, t, &tick)?;
        let outs = self.down.clock(t)?;
        let mut report = self.publish_outputs(outs, t)?;
        let truth = self.truth_at(t);
        if self.truth != Some(truth) {
            self.truth = Some(truth);
            self.bus.publish_json(Topic::Truth, t, &TruthRecord::States { states: truth })?;
        }
        let frame = self.generator.frame(t, Some(truth));
        self.bus.publish_json(Topic::RawFnirs, t, &frame)?;
        if let Some(h) = self.pipeline.push(frame)? {
            self.bus.publish_json(Topic::Hemo, t, &h)?;
            if let Some(v) = self.classifier.push(h)? {
                self.bus.publish_json(Topic::Workload, t, &v)?;
                self.down.workload(v.clone());
                self.workload.push(v.clone());
                report.workload = Some(v);
            }
        }
        Ok(report)
    }

    /// Applies the delivered action (if any) and gaze to the panel, then
    /// publishes the world state and the delivery acknowledgement.
    pub fn deliver(&mut self, t: i64, delivered: Option<(Action, ActionAck)>, gaze: Option<String>) -> Result<TickReport> {
        let ack = match delivered {
            Some((action, ack)) => {
                self.panel.apply(action)?;
                Some(ack)
            }
            None => None,
        };
        self.panel.set_gaze(gaze)?;
        let ws = self.panel.world_state(t);
        self.bus.publish_json(Topic::WorldState, t, &ws)?;
        let outs = self.down.world_state(&ws)?;
        let mut report = self.publish_outputs(outs, t)?;
        if let Some(ack) = ack {
            self.bus.publish_json(Topic::FrontendAcks, t, &FrontendAck::Action(ack.clone()))?;
            let outs = self.down.action_ack(ack)?;
            report.absorb(self.publish_outputs(outs, t)?);
        }
        if report.events.iter().any(|e| matches!(e.kind, EventKind::ErrorDetected { .. })) {
            report.alert = self.down.engine_mut().error_dashboard_state().ok();
        }
        Ok(report)
    }

    pub fn error_ack(&mut self, error_id: u64, t: i64) -> Result<TickReport> {
        self.bus.publish_json(Topic::FrontendAcks, t, &FrontendAck::ErrorAck { error_id })?;
        let outs = self.down.error_ack(error_id, t)?;
        self.publish_outputs(outs, t)
    }

    /// Closes the recording and computes metrics from the live logs.
    pub fn finish(self, status: SessionStatus) -> Result<SessionOutcome> {
        let end_ns = self.last_t;
        self.bus.publish_json(Topic::Session, end_ns, &SessionRecord::Ended { status })?;
        let bag = self.bus.stop_record(&self.cfg.session_id(), 0);
        let mctx = MetricContext::new(&self.cfg, self.task_start_ns, end_ns, status);
        let metrics = compute_metrics(&mctx, &self.events, self.down.acks(), &self.workload, &self.decisions, &self.needs)?;
        Ok(SessionOutcome { bag, events: self.events, guidance: self.decisions, metrics })
    }
}

/// Runs a full agent-driven session: calibration, then 10 Hz ticks until the
/// checklist is complete or the time cap is reached.
pub fn run_session(cfg: &SessionConfig, models: &FacetModels) -> Result<SessionOutcome> {
    run_session_with(cfg, models, None)
}

pub fn run_session_with(cfg: &SessionConfig, models: &FacetModels, reasoner: Option<Arc<dyn Reasoner>>) -> Result<SessionOutcome> {
    let mut core = SessionCore::new(cfg.clone(), models, reasoner)?;
    let tick = core.tick_ns();
    let Driver::Agent(agent_cfg) = &cfg.driver else {
        return Err(SimError::Config("run_session needs an agent driver".into()));
    };
    let mut agent = PilotAgent::new(agent_cfg.clone(), &cfg.checklist, cfg.seed, tick)?;
    let mut bridge = LagBridge::new(cfg.lag.clone(), cfg.seed, tick)?;
    let mut t = core.task_start_ns();
    agent.begin(t);
    loop {
        let r = core.begin_tick(t)?;
        for (d, need) in &r.decisions {
            agent.observe_guidance(d, *need, t);
        }
        if let Some(a) = agent.act(t) {
            bridge.submit(a, t);
        }
        let delivered = bridge.deliver(t);
        let r = core.deliver(t, delivered, agent.gaze(t))?;
        for (d, need) in &r.decisions {
            agent.observe_guidance(d, *need, t);
        }
        if let Some(view) = &r.alert {
            agent.on_alert(view.error_id, t);
        }
        if let Some(id) = agent.due_ack(t) {
            let r = core.error_ack(id, t)?;
            for (d, need) in &r.decisions {
                agent.observe_guidance(d, *need, t);
            }
        }
        if core.is_complete() {
            return core.finish(SessionStatus::Complete);
        }
        if core.time_cap_reached(t) {
            return core.finish(SessionStatus::TimeCapExceeded);
        }
        t += tick;
    }
}

