//! Strategy rule table.
//!
//! The table is JSON: `{"rules": [rule, ...]}` where each rule has an `id`,
//! an integer `priority` (unique across the table), an optional
//! `description`, a `when` pattern and a `then` template:
//!
//! ```json
//! {"id": "optim.optim.optim", "priority": 14,
//!  "when": {"memory": "optimal", "attention": "optimal", "perception": "optimal"},
//!  "then": {"modalities": ["visual", "audio"], "load": "standard",
//!           "drop_audio_when_gazing": true}}
//! ```
//!
//! Facet patterns are a state name or `"*"`. `when.error` is optional; when
//! present the rule only matches with (true) or without (false) an active
//! error. The highest-priority matching rule wins. A table is accepted only
//! if every facet combination, with and without an error, finds a rule.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeSet;
use std::path::Path;

use super::{
    compose_message, CognitiveContext, DecisionSource, GuidanceDecision, InfoLoad, Modality, ModalitySet, PolicyError, Result,
    WorkloadReadings,
};
use crate::classifier::WorkloadState;
use crate::task::Step;

pub const FIXTURE_RULES: &str = include_str!("../../fixtures/rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetPattern {
    Any,
    Is(WorkloadState),
}

impl FacetPattern {
    pub fn matches(self, s: WorkloadState) -> bool {
        match self {
            FacetPattern::Any => true,
            FacetPattern::Is(t) => t == s,
        }
    }
}

impl Serialize for FacetPattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FacetPattern::Any => s.serialize_str("*"),
            FacetPattern::Is(st) => s.serialize_str(st.as_str()),
        }
    }
}

impl<'de> Deserialize<'de> for FacetPattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "*" {
            return Ok(FacetPattern::Any);
        }
        s.parse().map(FacetPattern::Is).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulePattern {
    pub memory: FacetPattern,
    pub attention: FacetPattern,
    pub perception: FacetPattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<bool>,
}

impl RulePattern {
    pub fn matches(&self, states: [WorkloadState; 3], error: bool) -> bool {
        self.memory.matches(states[0])
            && self.attention.matches(states[1])
            && self.perception.matches(states[2])
            && self.error.is_none_or(|e| e == error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTemplate {
    pub modalities: ModalitySet,
    pub load: InfoLoad,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub drop_audio_when_gazing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyRule {
    pub id: String,
    pub priority: i64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub when: RulePattern,
    pub then: RuleTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    pub rules: Vec<StrategyRule>,
}

impl RuleTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut t: Self = serde_json::from_str(text).map_err(|e| PolicyError::RuleTableInvalid(e.to_string()))?;
        t.validate()?;
        t.rules.sort_by(|a, b| b.priority.cmp(&a.priority));
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::RuleTableInvalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn fixture() -> Self {
        Self::from_json(FIXTURE_RULES).expect("bundled rule table is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut prios = BTreeSet::new();
        for r in &self.rules {
            if !ids.insert(r.id.as_str()) {
                return Err(PolicyError::RuleTableInvalid(format!("duplicate rule id '{}'", r.id)));
            }
            if !prios.insert(r.priority) {
                return Err(PolicyError::RuleTableInvalid(format!("duplicate priority {}", r.priority)));
            }
        }
        for states in all_combinations() {
            for error in [false, true] {
                if !self.rules.iter().any(|r| r.when.matches(states, error)) {
                    return Err(PolicyError::RuleTableInvalid(format!(
                        "no rule for memory={} attention={} perception={} error={error}",
                        states[0], states[1], states[2]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn matching(&self, states: [WorkloadState; 3], error: bool) -> Option<&StrategyRule> {
        self.rules.iter().filter(|r| r.when.matches(states, error)).max_by_key(|r| r.priority)
    }
}

/// The 27 facet-state combinations in memory-major order.
pub fn all_combinations() -> impl Iterator<Item = [WorkloadState; 3]> {
    WorkloadState::ALL
        .into_iter()
        .flat_map(|m| WorkloadState::ALL.into_iter().flat_map(move |a| WorkloadState::ALL.into_iter().map(move |p| [m, a, p])))
}

/// The table's choice for a context whose current step targets `control`,
/// with a reasoning trace.
pub(crate) fn choose(
    table: &RuleTable,
    workload: &WorkloadReadings,
    error_active: bool,
    gaze: Option<&str>,
    control: &str,
) -> Result<(ModalitySet, InfoLoad, String)> {
    let states = workload.states();
    let rule = table.matching(states, error_active).ok_or(PolicyError::NoMatchingRule)?;
    let mut modalities = rule.then.modalities;
    let mut reasoning = format!(
        "rule {}: memory={} attention={} perception={} error={}",
        rule.id, states[0], states[1], states[2], error_active
    );
    if rule.then.drop_audio_when_gazing && gaze == Some(control) {
        if let Some(m) = modalities.without(Modality::Audio) {
            modalities = m;
            reasoning.push_str("; gaze already on target, audio dropped");
        }
    }
    Ok((modalities, rule.then.load, reasoning))
}

/// Decision from the highest-priority matching rule, filled in with the
/// step's message at the rule's load.
pub fn select_strategy(ctx: &CognitiveContext, step: &Step, table: &RuleTable) -> Result<GuidanceDecision> {
    let (modalities, load, reasoning) = choose(table, &ctx.workload, ctx.error_active, ctx.gaze_focus.as_deref(), &step.control)?;
    Ok(GuidanceDecision {
        timestamp_ns: ctx.timestamp_ns,
        step_id: step.id.clone(),
        modalities,
        load,
        message_text: compose_message(step, load)?,
        visual_target: modalities.contains(Modality::Visual).then(|| step.control.clone()),
        reasoning,
        source: DecisionSource::RuleTable,
    })
}
