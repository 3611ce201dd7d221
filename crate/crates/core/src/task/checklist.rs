use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{ControlValue, Result, TaskError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Switch,
    Selector,
    Button,
    Lever,
    Dial,
    Keypad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    pub id: String,
    pub label: String,
    pub kind: ControlKind,
    pub initial: ControlValue,
    /// Controls no step targets. The simulated agent's slips land here.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub distractor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Expect {
    Equals(ControlValue),
    Between([f64; 2]),
}

impl Expect {
    pub fn is_satisfied(&self, value: &ControlValue) -> bool {
        match (self, value) {
            (Expect::Equals(want), got) => want.matches(got),
            (Expect::Between([lo, hi]), ControlValue::Number(v)) => *lo <= *v && *v <= *hi,
            (Expect::Between(_), ControlValue::Text(_)) => false,
        }
    }

    /// A value that satisfies the predicate.
    pub fn target_value(&self) -> ControlValue {
        match self {
            Expect::Equals(v) => v.clone(),
            Expect::Between([lo, hi]) => ControlValue::Number(0.5 * (lo + hi)),
        }
    }
}

/// Message blocks for the three information loads. Standard adds the
/// context block to the command; comprehensive adds the environment block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceText {
    pub command: String,
    pub context: String,
    pub environment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub id: String,
    pub instruction: String,
    pub control: String,
    pub expect: Expect,
    pub guidance: GuidanceText,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    /// Also raise an error when the right control gets a wrong value.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub wrong_value_is_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Procedure {
    pub id: String,
    pub title: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistSpec {
    pub name: String,
    pub controls: Vec<Control>,
    pub procedures: Vec<Procedure>,
}

impl ChecklistSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| TaskError::SchemaError(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TaskError::SchemaError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checklist serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.procedures.is_empty() {
            return Err(TaskError::SchemaError("checklist has no procedures".into()));
        }
        let mut ids = BTreeSet::new();
        for c in &self.controls {
            if !ids.insert(c.id.as_str()) {
                return Err(TaskError::DuplicateId(c.id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.procedures {
            if !seen.insert(p.id.as_str()) {
                return Err(TaskError::DuplicateId(p.id.clone()));
            }
            if p.steps.is_empty() {
                return Err(TaskError::SchemaError(format!("procedure '{}' has no steps", p.id)));
            }
            for s in &p.steps {
                if !seen.insert(s.id.as_str()) {
                    return Err(TaskError::DuplicateId(s.id.clone()));
                }
                if !ids.contains(s.control.as_str()) {
                    return Err(TaskError::DanglingControlRef { step: s.id.clone(), control: s.control.clone() });
                }
                if let Expect::Between([lo, hi]) = s.expect {
                    if !(lo <= hi) {
                        return Err(TaskError::SchemaError(format!("step '{}' has an empty range", s.id)));
                    }
                }
                for (name, block) in [("command", &s.guidance.command), ("context", &s.guidance.context), ("environment", &s.guidance.environment)] {
                    if block.trim().is_empty() {
                        return Err(TaskError::SchemaError(format!("step '{}' has an empty {name} block", s.id)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn control(&self, id: &str) -> Option<&Control> {
        self.controls.iter().find(|c| c.id == id)
    }

    pub fn steps(&self) -> impl Iterator<Item = (&Procedure, &Step)> {
        self.procedures.iter().flat_map(|p| p.steps.iter().map(move |s| (p, s)))
    }

    pub fn step(&self, id: &str) -> Option<&Step> {
        self.steps().map(|(_, s)| s).find(|s| s.id == id)
    }

    pub fn step_count(&self) -> usize {
        self.procedures.iter().map(|p| p.steps.len()).sum()
    }

    pub fn distractors(&self) -> Vec<&Control> {
        self.controls.iter().filter(|c| c.distractor).collect()
    }

    pub fn initial_parameters(&self) -> BTreeMap<String, ControlValue> {
        self.controls.iter().map(|c| (c.id.clone(), c.initial.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> ChecklistSpec {
        ChecklistSpec::from_json(
            r#"{
              "name": "tiny",
              "controls": [
                {"id": "a", "label": "A", "kind": "switch", "initial": "OFF"},
                {"id": "b", "label": "B", "kind": "dial", "initial": 0}
              ],
              "procedures": [{"id": "p", "title": "P", "steps": [
                {"id": "p.1", "instruction": "A on", "control": "a", "expect": {"equals": "ON"},
                 "guidance": {"command": "A on.", "context": "ctx", "environment": "env"}},
                {"id": "p.2", "instruction": "B 5", "control": "b", "expect": {"between": [4.5, 5.5]},
                 "guidance": {"command": "B to 5.", "context": "ctx", "environment": "env"}}
              ]}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn predicates() {
        let s = tiny();
        assert!(s.procedures[0].steps[0].expect.is_satisfied(&ControlValue::from("ON")));
        assert!(!s.procedures[0].steps[0].expect.is_satisfied(&ControlValue::from("OFF")));
        let e = &s.procedures[0].steps[1].expect;
        assert!(e.is_satisfied(&ControlValue::Number(5.0)));
        assert!(e.is_satisfied(&ControlValue::Number(4.5)));
        assert!(!e.is_satisfied(&ControlValue::Number(5.6)));
        assert!(e.is_satisfied(&e.target_value()));
    }

    #[test]
    fn empty_procedure_list_is_schema_error() {
        let text = r#"{"name": "x", "controls": [], "procedures": []}"#;
        assert!(matches!(ChecklistSpec::from_json(text), Err(TaskError::SchemaError(_))));
    }

    #[test]
    fn dangling_control_and_duplicates() {
        let mut s = tiny();
        s.procedures[0].steps[1].control = "zz".into();
        assert_eq!(s.validate(), Err(TaskError::DanglingControlRef { step: "p.2".into(), control: "zz".into() }));
        let mut s = tiny();
        s.procedures[0].steps[1].id = "p.1".into();
        assert_eq!(s.validate(), Err(TaskError::DuplicateId("p.1".into())));
        let mut s = tiny();
        s.controls[1].id = "a".into();
        assert_eq!(s.validate(), Err(TaskError::DuplicateId("a".into())));
    }

    #[test]
    fn json_round_trip() {
        let s = tiny();
        assert_eq!(ChecklistSpec::from_json(&s.to_json()).unwrap(), s);
    }
}
