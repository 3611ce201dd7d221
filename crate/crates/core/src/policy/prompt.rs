//! Prompt assembly for the reasoner backend.
//!
//! A rendered prompt has three parts in fixed order: the instruction
//! corpus, the worked examples, and one real-time context block. Context
//! blocks are line-oriented `key: value` text so that the real-time block
//! can be parsed back into a [`CognitiveContext`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

use super::{
    CognitiveContext, ContextEvent, FacetReading, InfoLoad, ModalitySet, PolicyError, Result, TaskContext, WorkloadReadings,
};
use crate::classifier::Facet;

pub const REALTIME_HEADER: &str = "[REALTIME CONTEXT]";
pub const REALTIME_FOOTER: &str = "[END REALTIME CONTEXT]";
pub const FIXTURE_INSTRUCTIONS: &str = include_str!("../../fixtures/prompt/instructions.md");
pub const FIXTURE_FEW_SHOT: &str = include_str!("../../fixtures/prompt/few_shot.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub context: CognitiveContext,
    pub reasoning: String,
    pub modality: ModalitySet,
    pub load: InfoLoad,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptCorpus {
    pub instructions: String,
    pub examples: Vec<FewShotExample>,
}

impl PromptCorpus {
    pub fn new(instructions: String, examples: Vec<FewShotExample>) -> Result<Self> {
        if instructions.trim().is_empty() {
            return Err(PolicyError::CorpusMissing("instruction corpus is empty".into()));
        }
        if examples.is_empty() {
            return Err(PolicyError::CorpusMissing("no few-shot examples".into()));
        }
        Ok(Self { instructions, examples })
    }

    pub fn from_parts(instructions: &str, few_shot_json: &str) -> Result<Self> {
        let examples = serde_json::from_str(few_shot_json).map_err(|e| PolicyError::CorpusMissing(e.to_string()))?;
        Self::new(instructions.to_string(), examples)
    }

    /// Reads `instructions.md` and `few_shot.json` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name)).map_err(|e| PolicyError::CorpusMissing(format!("{name}: {e}")))
        };
        Self::from_parts(&read("instructions.md")?, &read("few_shot.json")?)
    }

    pub fn fixture() -> Self {
        Self::from_parts(FIXTURE_INSTRUCTIONS, FIXTURE_FEW_SHOT).expect("bundled corpus is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instructions: String,
    pub few_shot: Vec<String>,
    pub realtime_context: String,
}

impl PromptBundle {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("[INSTRUCTIONS]\n");
        out.push_str(self.instructions.trim_end());
        out.push_str("\n[END INSTRUCTIONS]\n\n");
        for ex in &self.few_shot {
            out.push_str(ex);
            out.push('\n');
        }
        out.push_str(&self.realtime_context);
        out.push_str("\nAnswer for the real-time context above.\n");
        out
    }

    /// Hex SHA-256 of the rendered prompt; keys transcript entries.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn context_block(ctx: &CognitiveContext, header: &str, footer: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "timestamp_ns: {}", ctx.timestamp_ns);
    for f in Facet::ALL {
        let r = ctx.workload.get(f);
        let _ = writeln!(out, "{f}: {} {}", r.state, r.confidence);
    }
    let _ = writeln!(out, "procedure: {}", one_line(&ctx.task.procedure_id));
    let _ = writeln!(out, "step: {}", one_line(&ctx.task.step_id));
    let _ = writeln!(out, "instruction: {}", one_line(&ctx.task.instruction));
    let _ = writeln!(out, "control: {}", one_line(&ctx.task.control));
    let _ = writeln!(out, "gaze: {}", ctx.gaze_focus.as_deref().unwrap_or("none"));
    let _ = writeln!(out, "error_active: {}", ctx.error_active);
    for e in &ctx.recent_events {
        let _ = writeln!(out, "event: {} {} {}", e.timestamp_ns, e.event, e.step_id.as_deref().unwrap_or("-"));
    }
    out.push_str(footer);
    out
}

pub fn render_realtime(ctx: &CognitiveContext) -> String {
    context_block(ctx, REALTIME_HEADER, REALTIME_FOOTER)
}

fn render_example(i: usize, ex: &FewShotExample) -> String {
    let mut out = context_block(&ex.context, &format!("[EXAMPLE {} CONTEXT]", i + 1), "[END EXAMPLE CONTEXT]");
    let _ = write!(
        out,
        "\nREASONING: {}\nMODALITY: {}\nLOAD: {}\nMESSAGE: {}\n",
        one_line(&ex.reasoning),
        ex.modality,
        ex.load,
        one_line(&ex.message)
    );
    out
}

pub fn build_prompt(ctx: &CognitiveContext, corpus: &PromptCorpus) -> Result<PromptBundle> {
    if corpus.instructions.trim().is_empty() || corpus.examples.is_empty() {
        return Err(PolicyError::CorpusMissing("corpus is incomplete".into()));
    }
    Ok(PromptBundle {
        instructions: corpus.instructions.clone(),
        few_shot: corpus.examples.iter().enumerate().map(|(i, e)| render_example(i, e)).collect(),
        realtime_context: render_realtime(ctx),
    })
}

/// Recovers the context from the single real-time block inside `text`.
pub fn parse_realtime(text: &str) -> Result<CognitiveContext> {
    let bad = |m: &str| PolicyError::ParseFailure(format!("realtime block: {m}"));
    let start = text.find(REALTIME_HEADER).ok_or_else(|| bad("missing header"))?;
    if text[start + REALTIME_HEADER.len()..].contains(REALTIME_HEADER) {
        return Err(bad("more than one block"));
    }
    let body = &text[start + REALTIME_HEADER.len()..];
    let end = body.find(REALTIME_FOOTER).ok_or_else(|| bad("missing footer"))?;
    let mut fields: Vec<(&str, &str)> = Vec::new();
    for line in body[..end].lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once(": ").or_else(|| line.split_once(':').map(|(k, _)| (k, ""))).ok_or_else(|| bad("malformed line"))?;
        fields.push((k.trim(), v.trim()));
    }
    let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v).ok_or_else(|| bad(&format!("missing '{k}'")));
    let reading = |k: &str| -> Result<FacetReading> {
        let v = get(k)?;
        let (s, c) = v.split_once(' ').ok_or_else(|| bad(k))?;
        Ok(FacetReading { state: s.parse().map_err(|_| bad(k))?, confidence: c.parse().map_err(|_| bad(k))? })
    };
    let mut recent_events = Vec::new();
    for (_, v) in fields.iter().filter(|(k, _)| *k == "event") {
        let mut parts = v.splitn(3, ' ');
        let ts = parts.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("event time"))?;
        let event = parts.next().ok_or_else(|| bad("event name"))?.to_string();
        let step = parts.next().ok_or_else(|| bad("event step"))?;
        recent_events.push(ContextEvent { timestamp_ns: ts, event, step_id: (step != "-").then(|| step.to_string()) });
    }
    let gaze = get("gaze")?;
    Ok(CognitiveContext {
        timestamp_ns: get("timestamp_ns")?.parse().map_err(|_| bad("timestamp"))?,
        workload: WorkloadReadings { memory: reading("memory")?, attention: reading("attention")?, perception: reading("perception")? },
        task: TaskContext {
            procedure_id: get("procedure")?.to_string(),
            step_id: get("step")?.to_string(),
            instruction: get("instruction")?.to_string(),
            control: get("control")?.to_string(),
        },
        gaze_focus: (gaze != "none").then(|| gaze.to_string()),
        error_active: get("error_active")?.parse().map_err(|_| bad("error_active"))?,
        recent_events,
    })
}
