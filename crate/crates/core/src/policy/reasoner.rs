use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;
use thiserror::Error;

use super::parse::{format_reasoner_output, parse_reasoner_output, ReasonerOutput};
use super::prompt::{build_prompt, parse_realtime, PromptBundle, PromptCorpus};
use super::rules::{choose, select_strategy, RuleTable};
use super::{violates_overload_guard, CognitiveContext, DecisionSource, GuidanceDecision, Modality, Result};
use crate::policy::compose_message;
use crate::task::Step;

pub const DEFAULT_REASONER_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ReasonerError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend did not answer in time")]
    Timeout,
    #[error("no recorded reply for prompt {0}")]
    NoTranscriptEntry(String),
}

pub trait Reasoner: Send + Sync {
    fn name(&self) -> &str;

    fn query(&self, prompt: &PromptBundle) -> Result<String, ReasonerError>;

    /// True for in-process reasoners that answer without I/O. These run on
    /// the caller's thread; all others race a timeout on a worker thread.
    fn is_inline(&self) -> bool {
        false
    }
}

/// Asks the reasoner and turns its reply into a decision. Any failure
/// (timeout, transport error, unparseable reply, or a reply that breaks the
/// overload guard) yields the rule-table decision instead, with the reason
/// in the trace.
pub fn decide_adaptive(
    ctx: &CognitiveContext,
    step: &Step,
    table: &RuleTable,
    corpus: &PromptCorpus,
    reasoner: &Arc<dyn Reasoner>,
    timeout: Duration,
) -> Result<GuidanceDecision> {
    decide_adaptive_traced(ctx, step, table, corpus, reasoner, timeout).map(|(d, _)| d)
}

/// As [`decide_adaptive`], also returning the exchange with the backend.
/// Feeding the exchanges to a [`ScriptedReasoner`] reproduces the same
/// decisions, including fallbacks caused by timeouts.
pub fn decide_adaptive_traced(
    ctx: &CognitiveContext,
    step: &Step,
    table: &RuleTable,
    corpus: &PromptCorpus,
    reasoner: &Arc<dyn Reasoner>,
    timeout: Duration,
) -> Result<(GuidanceDecision, Option<TranscriptEntry>)> {
    let fallback = |why: String| -> Result<GuidanceDecision> {
        let mut d = select_strategy(ctx, step, table)?;
        d.reasoning = format!("fallback ({why}); {}", d.reasoning);
        Ok(d)
    };
    let bundle = match build_prompt(ctx, corpus) {
        Ok(b) => b,
        Err(e) => return Ok((fallback(e.to_string())?, None)),
    };
    let reply = if reasoner.is_inline() {
        reasoner.query(&bundle)
    } else {
        let (tx, rx) = mpsc::channel();
        let r = Arc::clone(reasoner);
        let b = bundle.clone();
        std::thread::spawn(move || {
            // the receiver may be gone after a timeout; that reply is dropped
            let _ = tx.send(r.query(&b));
        });
        rx.recv_timeout(timeout).unwrap_or(Err(ReasonerError::Timeout))
    };
    let entry = TranscriptEntry { prompt_sha256: bundle.digest(), reply: reply.as_ref().ok().cloned(), error: reply.as_ref().err().cloned() };
    let text = match reply {
        Ok(t) => t,
        Err(e) => return Ok((fallback(e.to_string())?, Some(entry))),
    };
    let out = match parse_reasoner_output(&text) {
        Ok(o) => o,
        Err(e) => return Ok((fallback(e.to_string())?, Some(entry))),
    };
    if violates_overload_guard(&ctx.workload, out.modalities, out.load) {
        let why = format!("reply {} / {} breaks the overload guard", out.modalities, out.load);
        return Ok((fallback(why)?, Some(entry)));
    }
    let mut reasoning = out.reasoning;
    if let Some(m) = out.message {
        reasoning.push_str(&format!(" [reasoner message: {m}]"));
    }
    let decision = GuidanceDecision {
        timestamp_ns: ctx.timestamp_ns,
        step_id: step.id.clone(),
        modalities: out.modalities,
        load: out.load,
        message_text: compose_message(step, out.load)?,
        visual_target: out.modalities.contains(Modality::Visual).then(|| step.control.clone()),
        reasoning,
        source: DecisionSource::Reasoner,
    };
    Ok((decision, Some(entry)))
}

/// Deterministic stand-in backend: reads the real-time block back out of
/// the prompt and answers with the rule table's choice in reply grammar.
#[derive(Debug, Clone)]
pub struct RuleTableReasoner {
    table: RuleTable,
}

impl RuleTableReasoner {
    pub fn new(table: RuleTable) -> Self {
        Self { table }
    }
}

impl Reasoner for RuleTableReasoner {
    fn name(&self) -> &str {
        "rule-table"
    }

    fn query(&self, prompt: &PromptBundle) -> Result<String, ReasonerError> {
        let ctx = parse_realtime(&prompt.realtime_context).map_err(|e| ReasonerError::Unavailable(e.to_string()))?;
        let (modalities, load, reasoning) =
            choose(&self.table, &ctx.workload, ctx.error_active, ctx.gaze_focus.as_deref(), &ctx.task.control)
                .map_err(|e| ReasonerError::Unavailable(e.to_string()))?;
        Ok(format_reasoner_output(&ReasonerOutput { reasoning, modalities, load, message: Some(ctx.task.instruction) }))
    }

    fn is_inline(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_sha256: String,
    pub reply: Option<String>,
    pub error: Option<ReasonerError>,
}

impl TranscriptEntry {
    pub fn write_jsonl<W: Write>(mut w: W, entries: &[TranscriptEntry]) -> std::io::Result<()> {
        for e in entries {
            writeln!(w, "{}", serde_json::to_string(e).expect("entry serializes"))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> std::result::Result<Vec<TranscriptEntry>, String> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| e.to_string())?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line).map_err(|e| e.to_string())?);
            }
        }
        Ok(out)
    }
}

/// Wraps a backend and keeps a transcript of every exchange.
pub struct RecordingReasoner {
    inner: Arc<dyn Reasoner>,
    log: Mutex<Vec<TranscriptEntry>>,
}

impl RecordingReasoner {
    pub fn new(inner: Arc<dyn Reasoner>) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.log.lock().expect("transcript lock").clone()
    }
}

impl Reasoner for RecordingReasoner {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn query(&self, prompt: &PromptBundle) -> Result<String, ReasonerError> {
        let r = self.inner.query(prompt);
        let entry = TranscriptEntry {
            prompt_sha256: prompt.digest(),
            reply: r.as_ref().ok().cloned(),
            error: r.as_ref().err().cloned(),
        };
        self.log.lock().expect("transcript lock").push(entry);
        r
    }

    fn is_inline(&self) -> bool {
        self.inner.is_inline()
    }
}

/// Replays a recorded transcript: replies are matched by prompt digest, in
/// recorded order for repeated prompts.
pub struct ScriptedReasoner {
    replies: Mutex<HashMap<String, VecDeque<Result<String, ReasonerError>>>>,
}

impl ScriptedReasoner {
    pub fn new(entries: &[TranscriptEntry]) -> Self {
        let mut replies: HashMap<String, VecDeque<_>> = HashMap::new();
        for e in entries {
            let r = match (&e.reply, &e.error) {
                (Some(t), _) => Ok(t.clone()),
                (None, Some(err)) => Err(err.clone()),
                (None, None) => Err(ReasonerError::Unavailable("empty transcript entry".into())),
            };
            replies.entry(e.prompt_sha256.clone()).or_default().push_back(r);
        }
        Self { replies: Mutex::new(replies) }
    }
}

impl Reasoner for ScriptedReasoner {
    fn name(&self) -> &str {
        "scripted"
    }

    fn query(&self, prompt: &PromptBundle) -> Result<String, ReasonerError> {
        let digest = prompt.digest();
        let mut map = self.replies.lock().expect("script lock");
        map.get_mut(&digest).and_then(VecDeque::pop_front).unwrap_or(Err(ReasonerError::NoTranscriptEntry(digest)))
    }

    fn is_inline(&self) -> bool {
        true
    }
}

/// HTTP backend. Sends `{"model", "prompt", "stream": false}` as JSON and
/// accepts either a JSON reply carrying the text in `response`, `text`,
/// `choices[0].text` or `choices[0].message.content`, or a plain-text body.
pub struct HttpReasoner {
    url: String,
    model: String,
    agent: ureq::Agent,
}

pub const REASONER_URL_ENV: &str = "NEUROGUIDE_REASONER_URL";
pub const REASONER_MODEL_ENV: &str = "NEUROGUIDE_REASONER_MODEL";

impl HttpReasoner {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { url: url.into(), model: model.into(), agent }
    }

    /// Endpoint and model from the environment, if an endpoint is set.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let url = std::env::var(REASONER_URL_ENV).ok().filter(|u| !u.is_empty())?;
        let model = std::env::var(REASONER_MODEL_ENV).unwrap_or_else(|_| "default".into());
        Some(Self::new(url, model, timeout))
    }

    fn extract(body: &str) -> String {
        let Ok(v) = serde_json::from_str::<serde_json::Value>(body) else {
            return body.to_string();
        };
        let candidates = [
            v.get("response"),
            v.get("text"),
            v.pointer("/choices/0/text"),
            v.pointer("/choices/0/message/content"),
        ];
        let found = candidates.into_iter().flatten().find_map(|x| x.as_str()).map(str::to_string);
        found.unwrap_or_else(|| body.to_string())
    }
}

impl Reasoner for HttpReasoner {
    fn name(&self) -> &str {
        "http"
    }

    fn query(&self, prompt: &PromptBundle) -> Result<String, ReasonerError> {
        let payload = serde_json::json!({ "model": self.model, "prompt": prompt.render(), "stream": false });
        let mut resp = self.agent.post(&self.url).send_json(&payload).map_err(|e| ReasonerError::Unavailable(e.to_string()))?;
        let body = resp.body_mut().read_to_string().map_err(|e| ReasonerError::Unavailable(e.to_string()))?;
        Ok(Self::extract(&body))
    }
}
