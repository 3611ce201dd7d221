//! Guidance policy: cognitive and task context in, guidance decision out.
//!
//! The rule table is the deterministic core. A reasoner backend may be
//! consulted through the prompt/parse contract in [`prompt`] and
//! [`parse`]; anything it gets wrong falls back to the table.

mod message;
pub mod parse;
pub mod prompt;
mod random;
mod reasoner;
mod rules;

pub use message::compose_message;
pub use parse::{parse_reasoner_output, ReasonerOutput};
pub use prompt::{build_prompt, parse_realtime, render_realtime, FewShotExample, PromptBundle, PromptCorpus};
pub use random::RandomPolicy;
pub use reasoner::{
    decide_adaptive, decide_adaptive_traced, HttpReasoner, Reasoner, ReasonerError, RecordingReasoner, RuleTableReasoner, ScriptedReasoner,
    TranscriptEntry, DEFAULT_REASONER_TIMEOUT,
};
pub use rules::{all_combinations, select_strategy, FacetPattern, RuleTable, RulePattern, RuleTemplate, StrategyRule};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::classifier::{Facet, WorkloadState, WorkloadSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no rule matches the context")]
    NoMatchingRule,
    #[error("rule table: {0}")]
    RuleTableInvalid(String),
    #[error("step '{step}' has no {block} block")]
    MissingVariant { step: String, block: &'static str },
    #[error("prompt corpus: {0}")]
    CorpusMissing(String),
    #[error("reasoner output: {0}")]
    ParseFailure(String),
    #[error("invalid modality token '{0}'")]
    InvalidModalityToken(String),
}

pub type Result<T, E = PolicyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Text];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }
}

impl FromStr for Modality {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "visual" => Ok(Modality::Visual),
            "audio" => Ok(Modality::Audio),
            "text" => Ok(Modality::Text),
            _ => Err(PolicyError::InvalidModalityToken(s.trim().to_string())),
        }
    }
}

/// A nonempty subset of the three modalities.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModalitySet(u8);

impl ModalitySet {
    pub const VISUAL: ModalitySet = ModalitySet(0b001);
    pub const VISUAL_AUDIO: ModalitySet = ModalitySet(0b011);
    pub const VISUAL_AUDIO_TEXT: ModalitySet = ModalitySet(0b111);

    /// All seven subsets in a fixed order.
    pub fn all() -> [ModalitySet; 7] {
        [1, 2, 4, 3, 5, 6, 7].map(ModalitySet)
    }

    pub fn singletons() -> [ModalitySet; 3] {
        [1, 2, 4].map(ModalitySet)
    }

    pub fn new(mods: &[Modality]) -> Option<Self> {
        let bits = mods.iter().fold(0u8, |b, m| b | m.bit());
        (bits != 0).then_some(ModalitySet(bits))
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn without(self, m: Modality) -> Option<Self> {
        let bits = self.0 & !m.bit();
        (bits != 0).then_some(ModalitySet(bits))
    }

    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// Accepts tokens joined by `+`, `,` or whitespace, as in
    /// `visual+audio`.
    pub fn parse_tokens(s: &str) -> Result<Self> {
        let mut mods = Vec::new();
        for tok in s.split(|c: char| c == '+' || c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            mods.push(tok.parse::<Modality>()?);
        }
        ModalitySet::new(&mods).ok_or_else(|| PolicyError::InvalidModalityToken(s.trim().to_string()))
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Modality::as_str).collect();
        f.write_str(&names.join("+"))
    }
}

impl fmt::Debug for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mods = Vec::<Modality>::deserialize(d)?;
        ModalitySet::new(&mods).ok_or_else(|| serde::de::Error::custom("modality set must be nonempty"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoLoad {
    Essential,
    Standard,
    Comprehensive,
}

impl InfoLoad {
    pub const ALL: [InfoLoad; 3] = [InfoLoad::Essential, InfoLoad::Standard, InfoLoad::Comprehensive];

    pub fn as_str(self) -> &'static str {
        match self {
            InfoLoad::Essential => "essential",
            InfoLoad::Standard => "standard",
            InfoLoad::Comprehensive => "comprehensive",
        }
    }
}

impl fmt::Display for InfoLoad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfoLoad {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "essential" => Ok(InfoLoad::Essential),
            "standard" => Ok(InfoLoad::Standard),
            "comprehensive" => Ok(InfoLoad::Comprehensive),
            other => Err(PolicyError::ParseFailure(format!("unknown load '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Baseline,
    Random,
    Adaptive,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Baseline, Condition::Random, Condition::Adaptive];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Random => "random",
            Condition::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Condition::Baseline),
            "random" => Ok(Condition::Random),
            "adaptive" => Ok(Condition::Adaptive),
            other => Err(format!("unknown condition '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    RuleTable,
    Reasoner,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetReading {
    pub state: WorkloadState,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReadings {
    pub memory: FacetReading,
    pub attention: FacetReading,
    pub perception: FacetReading,
}

impl WorkloadReadings {
    pub fn uniform(state: WorkloadState) -> Self {
        let r = || FacetReading { state, confidence: 1.0 };
        Self { memory: r(), attention: r(), perception: r() }
    }

    pub fn from_states(states: [WorkloadState; 3]) -> Self {
        let r = |state| FacetReading { state, confidence: 1.0 };
        Self { memory: r(states[0]), attention: r(states[1]), perception: r(states[2]) }
    }

    pub fn from_summary(s: &WorkloadSummary) -> Self {
        let r = |f: Facet| FacetReading { state: s.facet(f).state, confidence: s.facet(f).mean_confidence };
        Self { memory: r(Facet::Memory), attention: r(Facet::Attention), perception: r(Facet::Perception) }
    }

    pub fn get(&self, f: Facet) -> &FacetReading {
        match f {
            Facet::Memory => &self.memory,
            Facet::Attention => &self.attention,
            Facet::Perception => &self.perception,
        }
    }

    pub fn states(&self) -> [WorkloadState; 3] {
        Facet::ALL.map(|f| self.get(f).state)
    }

    pub fn any(&self, s: WorkloadState) -> bool {
        self.states().contains(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub procedure_id: String,
    pub step_id: String,
    pub instruction: String,
    pub control: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEvent {
    pub timestamp_ns: i64,
    pub event: String,
    pub step_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CognitiveContext {
    pub timestamp_ns: i64,
    pub workload: WorkloadReadings,
    pub task: TaskContext,
    pub gaze_focus: Option<String>,
    pub error_active: bool,
    pub recent_events: Vec<ContextEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceDecision {
    pub timestamp_ns: i64,
    pub step_id: String,
    pub modalities: ModalitySet,
    pub load: InfoLoad,
    pub message_text: String,
    pub visual_target: Option<String>,
    pub reasoning: String,
    pub source: DecisionSource,
}

impl GuidanceDecision {
    /// Structural invariants every decision must satisfy.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.modalities.contains(Modality::Visual) && self.visual_target.is_none() {
            return Err("visual decision without a target".into());
        }
        if (self.modalities.contains(Modality::Text) || self.modalities.contains(Modality::Audio)) && self.message_text.trim().is_empty() {
            return Err("spoken or written decision without a message".into());
        }
        Ok(())
    }
}

/// Under any overloaded facet, text is ruled out and audio must stay
/// minimal (essential load).
pub fn violates_overload_guard(workload: &WorkloadReadings, modalities: ModalitySet, load: InfoLoad) -> bool {
    workload.any(WorkloadState::Overload)
        && (modalities.contains(Modality::Text) || (modalities.contains(Modality::Audio) && load != InfoLoad::Essential))
}
