use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{quantize_up, sub_seed, Result, SimError};
use crate::policy::{GuidanceDecision, ModalitySet};
use crate::task::{Action, ChecklistSpec, ControlValue};

const STREAM_STEPS: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expertise {
    Novice,
    Experienced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub expertise: Expertise,
    pub base_error_prob: f64,
    /// Mean of the lognormal action latency, seconds.
    pub latency_mean_s: f64,
    pub latency_sigma: f64,
    /// Applied when guidance matching the agent's need arrives before it acts.
    pub guided_error_mult: f64,
    pub guided_latency_mult: f64,
    pub ack_delay_s: f64,
    /// The agent looks at the control it is about to operate this long before.
    pub gaze_lead_s: f64,
}

impl AgentConfig {
    pub fn novice() -> Self {
        Self {
            expertise: Expertise::Novice,
            base_error_prob: 0.12,
            latency_mean_s: 9.0,
            latency_sigma: 0.5,
            guided_error_mult: 0.5,
            guided_latency_mult: 0.8,
            ack_delay_s: 1.0,
            gaze_lead_s: 1.0,
        }
    }

    pub fn experienced() -> Self {
        Self { expertise: Expertise::Experienced, base_error_prob: 0.05, latency_mean_s: 6.0, ..Self::novice() }
    }

    pub fn for_expertise(e: Expertise) -> Self {
        match e {
            Expertise::Novice => Self::novice(),
            Expertise::Experienced => Self::experienced(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.base_error_prob) || !prob(self.base_error_prob * self.guided_error_mult) || self.guided_error_mult < 0.0 {
            return Err(SimError::Config("agent error probabilities must lie in [0, 1]".into()));
        }
        if !(self.latency_mean_s > 0.0 && self.latency_sigma > 0.0 && self.guided_latency_mult > 0.0) {
            return Err(SimError::Config("agent latency parameters must be positive".into()));
        }
        if !(self.ack_delay_s >= 0.0 && self.gaze_lead_s >= 0.0) {
            return Err(SimError::Config("agent delays must be non-negative".into()));
        }
        Ok(())
    }

    fn latency(&self) -> LogNormal<f64> {
        let mu = self.latency_mean_s.ln() - 0.5 * self.latency_sigma * self.latency_sigma;
        LogNormal::new(mu, self.latency_sigma).expect("validated latency parameters")
    }
}

/// Everything random about one step, drawn from that step's own stream so
/// that paired seeds stay aligned across conditions.
#[derive(Debug, Clone, Copy)]
struct StepDraws {
    latency_s: f64,
    u_err: f64,
    distractor: usize,
    recovery_s: f64,
}

#[derive(Debug, Clone)]
struct Plan {
    act_at_ns: i64,
    retry: bool,
    guided: bool,
    draws: StepDraws,
}

struct Target {
    step_id: String,
    control: String,
    value: ControlValue,
}

/// Scripted pilot: works through the checklist in order, sometimes slipping
/// onto a distractor control, acknowledging error alerts and then redoing
/// the step.
pub struct PilotAgent {
    cfg: AgentConfig,
    seed: u64,
    tick_ns: i64,
    targets: Vec<Target>,
    distractors: Vec<(String, ControlValue)>,
    idx: usize,
    plan: Option<Plan>,
    pending_ack: Option<(u64, i64)>,
}

fn toggled(v: &ControlValue) -> ControlValue {
    match v {
        ControlValue::Number(x) => ControlValue::Number(x + 1.0),
        ControlValue::Text(s) if s.eq_ignore_ascii_case("ON") => "OFF".into(),
        ControlValue::Text(_) => "ON".into(),
    }
}

impl PilotAgent {
    pub fn new(cfg: AgentConfig, spec: &ChecklistSpec, seed: u64, tick_ns: i64) -> Result<Self> {
        cfg.validate()?;
        let targets = spec
            .steps()
            .map(|(_, s)| Target { step_id: s.id.clone(), control: s.control.clone(), value: s.expect.target_value() })
            .collect();
        let distractors: Vec<_> = spec.distractors().into_iter().map(|c| (c.id.clone(), toggled(&c.initial))).collect();
        if distractors.is_empty() && cfg.base_error_prob > 0.0 {
            return Err(SimError::Config("an agent that makes errors needs distractor controls".into()));
        }
        Ok(Self { cfg, seed, tick_ns, targets, distractors, idx: 0, plan: None, pending_ack: None })
    }

    fn draws(&self, step: usize) -> StepDraws {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, STREAM_STEPS, step as u64));
        let lat = self.cfg.latency();
        StepDraws {
            latency_s: lat.sample(&mut rng),
            u_err: rng.random(),
            distractor: rng.random_range(0..self.distractors.len().max(1)),
            recovery_s: lat.sample(&mut rng),
        }
    }

    fn after(&self, t: i64, secs: f64) -> i64 {
        t + quantize_up((secs * 1e9) as i64, self.tick_ns).max(self.tick_ns)
    }

    fn plan_step(&mut self, t: i64) {
        self.plan = (self.idx < self.targets.len()).then(|| {
            let draws = self.draws(self.idx);
            Plan { act_at_ns: self.after(t, draws.latency_s), retry: false, guided: false, draws }
        });
    }

    /// Starts work on the first step at `t`.
    pub fn begin(&mut self, t: i64) {
        self.idx = 0;
        self.plan_step(t);
    }

    pub fn is_done(&self) -> bool {
        self.idx >= self.targets.len()
    }

    pub fn current_step(&self) -> Option<&str> {
        self.targets.get(self.idx).map(|t| t.step_id.as_str())
    }

    /// Guidance for the step the agent is on, matching what it needed,
    /// shortens the remaining wait and makes a slip less likely. Applies
    /// once per step.
    pub fn observe_guidance(&mut self, d: &GuidanceDecision, need: ModalitySet, t: i64) {
        let on_step = self.current_step() == Some(d.step_id.as_str());
        let Some(plan) = self.plan.as_mut() else { return };
        if !on_step || plan.guided || d.modalities != need {
            return;
        }
        plan.guided = true;
        let remaining = plan.act_at_ns - t;
        if remaining > 0 {
            let scaled = (remaining as f64 * self.cfg.guided_latency_mult) as i64;
            plan.act_at_ns = t + quantize_up(scaled, self.tick_ns).max(self.tick_ns);
        }
    }

    pub fn on_alert(&mut self, error_id: u64, t: i64) {
        let at = t + quantize_up((self.cfg.ack_delay_s * 1e9) as i64, self.tick_ns);
        self.pending_ack = Some((error_id, at));
    }

    pub fn due_ack(&mut self, t: i64) -> Option<u64> {
        match self.pending_ack {
            Some((id, at)) if at <= t => {
                self.pending_ack = None;
                Some(id)
            }
            _ => None,
        }
    }

    pub fn gaze(&self, t: i64) -> Option<String> {
        let plan = self.plan.as_ref()?;
        let lead = (self.cfg.gaze_lead_s * 1e9) as i64;
        (plan.act_at_ns - t <= lead).then(|| self.targets[self.idx].control.clone())
    }

    /// The action performed at `t`, if one is due.
    pub fn act(&mut self, t: i64) -> Option<Action> {
        let plan = self.plan.clone().filter(|p| p.act_at_ns <= t)?;
        let p_err = self.cfg.base_error_prob * if plan.guided { self.cfg.guided_error_mult } else { 1.0 };
        if !plan.retry && plan.draws.u_err < p_err {
            let (control, value) = self.distractors[plan.draws.distractor].clone();
            let retry_at = self.after(t, self.cfg.ack_delay_s + plan.draws.recovery_s);
            self.plan = Some(Plan { act_at_ns: retry_at, retry: true, ..plan });
            return Some(Action { control_id: control, value, timestamp_ns: t });
        }
        let target = &self.targets[self.idx];
        let action = Action { control_id: target.control.clone(), value: target.value.clone(), timestamp_ns: t };
        self.idx += 1;
        self.plan_step(t);
        Some(action)
    }
}
