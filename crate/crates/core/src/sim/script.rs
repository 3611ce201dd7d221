use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::classifier::{Facet, WorkloadState};

/// From `from_s` seconds after task start the three facets sit at `states`
/// (memory, attention, perception) until the next segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from_s: f64,
    pub states: [WorkloadState; 3],
}

/// While the active step carries `tag`, `facet` is forced to `state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub tag: String,
    pub facet: Facet,
    pub state: WorkloadState,
}

/// Motion artifacts: a Poisson stream of intensity dips on one channel
/// group at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSchedule {
    pub rate_per_min: f64,
    /// Relative intensity drop during a spike.
    pub depth: f64,
    pub duration_frames: usize,
}

impl Default for ArtifactSchedule {
    fn default() -> Self {
        Self { rate_per_min: 0.5, depth: 0.2, duration_frames: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScript {
    pub name: String,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
    #[serde(default)]
    pub artifacts: ArtifactSchedule,
    /// White noise on each concentration sample, micromolar.
    pub noise_um: f64,
}

pub const PRESETS: [&str; 5] = ["all_optimal", "all_overload", "all_underload", "task_coupled", "mixed"];

impl LoadScript {
    pub fn constant(name: &str, states: [WorkloadState; 3]) -> Self {
        Self {
            name: name.into(),
            segments: vec![Segment { from_s: 0.0, states }],
            couplings: vec![],
            artifacts: ArtifactSchedule::default(),
            noise_um: 0.3,
        }
    }

    /// Named scripts. `task_coupled` keeps every facet optimal except memory,
    /// which overloads during data-entry steps. `mixed` cycles through
    /// facet patterns every 40 s on top of the same coupling.
    pub fn preset(name: &str) -> Result<Self> {
        use WorkloadState::*;
        let data_entry = || vec![Coupling { tag: "data_entry".into(), facet: Facet::Memory, state: Overload }];
        Ok(match name {
            "all_optimal" => Self::constant(name, [Optimal; 3]),
            "all_overload" => Self::constant(name, [Overload; 3]),
            "all_underload" => Self::constant(name, [Underload; 3]),
            "task_coupled" => Self { couplings: data_entry(), ..Self::constant(name, [Optimal; 3]) },
            "mixed" => {
                let cycle = [
                    [Optimal, Optimal, Optimal],
                    [Optimal, Underload, Optimal],
                    [Optimal, Optimal, Overload],
                    [Underload, Underload, Underload],
                    [Optimal, Overload, Optimal],
                ];
                let segments = (0..60).map(|i| Segment { from_s: 40.0 * i as f64, states: cycle[i % cycle.len()] }).collect();
                Self { segments, couplings: data_entry(), ..Self::constant(name, [Optimal; 3]) }
            }
            other => return Err(SimError::Config(format!("unknown load script '{other}'; presets are {}", PRESETS.join(", ")))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.segments.first().ok_or_else(|| SimError::Config("load script has no segments".into()))?;
        if first.from_s != 0.0 {
            return Err(SimError::Config("first segment must start at 0 s".into()));
        }
        if self.segments.windows(2).any(|w| !(w[1].from_s > w[0].from_s)) {
            return Err(SimError::Config("segment starts must increase".into()));
        }
        if !(self.noise_um >= 0.0) || !(self.artifacts.rate_per_min >= 0.0) || !(0.0..1.0).contains(&self.artifacts.depth) {
            return Err(SimError::Config("noise, artifact rate and depth must be non-negative (depth below 1)".into()));
        }
        Ok(())
    }

    /// Scripted states at `t_s` seconds into the task with the given tags on
    /// the active step.
    pub fn states_at(&self, t_s: f64, tags: &[String]) -> [WorkloadState; 3] {
        let mut states = self.segments.iter().rev().find(|s| s.from_s <= t_s).unwrap_or(&self.segments[0]).states;
        for c in &self.couplings {
            if tags.contains(&c.tag) {
                states[c.facet as usize] = c.state;
            }
        }
        states
    }
}
