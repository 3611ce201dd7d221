//! Per-facet workload classification.
//!
//! Each facet (working memory, attention, perception) has its own
//! multinomial logistic model over a shared window feature vector. The
//! streaming [`WorkloadClassifier`] emits one [`WorkloadVector`] per 10 Hz
//! tick once a full window of hemoglobin samples exists.

mod features;
mod fit;
mod model;
mod summary;

pub use features::{extract_features, extract_raw_features, FeatureBaseline, FeatureSpec, FeatureVector};
pub use fit::{fit_multinomial, loss_and_gradient, FitOptions, FitReport};
pub use model::{FacetModel, FacetModels, ModelFamily};
pub use summary::{rolling_summary, FacetSummary, WorkloadHistory, WorkloadSummary};

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::signal::HemoSample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("window has {good} of {total} usable samples, below the 80% floor")]
    InsufficientQuality { good: usize, total: usize },
    #[error("training data has no example of class {0}")]
    MissingClass(WorkloadState),
    #[error("gradient norm {grad_norm:e} above tolerance after {iterations} iterations")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("history is empty")]
    EmptyHistory,
    #[error("model file: {0}")]
    ModelFormat(String),
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

/// Class index order in every weight matrix: underload, optimal, overload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadState {
    Underload,
    Optimal,
    Overload,
}

impl WorkloadState {
    pub const ALL: [WorkloadState; 3] = [WorkloadState::Underload, WorkloadState::Optimal, WorkloadState::Overload];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadState::Underload => "underload",
            WorkloadState::Optimal => "optimal",
            WorkloadState::Overload => "overload",
        }
    }

    /// Tie-break rank: lower wins. Optimal > Underload > Overload.
    fn tie_rank(self) -> u8 {
        match self {
            WorkloadState::Optimal => 0,
            WorkloadState::Underload => 1,
            WorkloadState::Overload => 2,
        }
    }
}

impl fmt::Display for WorkloadState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkloadState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "underload" => Ok(Self::Underload),
            "optimal" => Ok(Self::Optimal),
            "overload" => Ok(Self::Overload),
            other => Err(format!("unknown workload state '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    Memory,
    Attention,
    Perception,
}

impl Facet {
    pub const ALL: [Facet; 3] = [Facet::Memory, Facet::Attention, Facet::Perception];

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::Memory => "memory",
            Facet::Attention => "attention",
            Facet::Perception => "perception",
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Facet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "memory" => Ok(Self::Memory),
            "attention" => Ok(Self::Attention),
            "perception" => Ok(Self::Perception),
            other => Err(format!("unknown facet '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetEstimate {
    pub facet: Facet,
    pub state: WorkloadState,
    pub confidence: f64,
    pub probs: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadVector {
    pub timestamp_ns: i64,
    pub memory: FacetEstimate,
    pub attention: FacetEstimate,
    pub perception: FacetEstimate,
}

impl WorkloadVector {
    pub fn facet(&self, facet: Facet) -> &FacetEstimate {
        match facet {
            Facet::Memory => &self.memory,
            Facet::Attention => &self.attention,
            Facet::Perception => &self.perception,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: [f64; 3]) -> [f64; 3] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = scores.map(|s| (s - max).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

/// Highest probability class; exact ties resolve Optimal > Underload > Overload.
pub fn argmax_with_tie_rule(probs: &[f64; 3]) -> WorkloadState {
    let mut best = WorkloadState::Optimal;
    for s in WorkloadState::ALL {
        let (p, b) = (probs[s.index()], probs[best.index()]);
        if p > b || (p == b && s.tie_rank() < best.tie_rank()) {
            best = s;
        }
    }
    best
}

pub fn classify_facet(x: &FeatureVector, model: &FacetModel) -> Result<FacetEstimate> {
    let scores = model.scores(&x.values)?;
    let probs = softmax(scores);
    let state = argmax_with_tie_rule(&probs);
    Ok(FacetEstimate { facet: model.facet, state, confidence: probs[state.index()], probs })
}

/// Features from the window, then each facet model independently.
pub fn classify_all(
    hemo_window: &[HemoSample],
    spec: &FeatureSpec,
    baseline: &FeatureBaseline,
    models: &FacetModels,
) -> Result<WorkloadVector> {
    let x = extract_features(hemo_window, spec, baseline)?;
    classify_features(&x, hemo_window.last().map_or(0, |s| s.timestamp_ns), models)
}

pub fn classify_features(x: &FeatureVector, timestamp_ns: i64, models: &FacetModels) -> Result<WorkloadVector> {
    Ok(WorkloadVector {
        timestamp_ns,
        memory: classify_facet(x, &models.memory)?,
        attention: classify_facet(x, &models.attention)?,
        perception: classify_facet(x, &models.perception)?,
    })
}

/// Sliding window of hemoglobin samples feeding the three facet models.
#[derive(Debug, Clone)]
pub struct WorkloadClassifier {
    spec: FeatureSpec,
    baseline: FeatureBaseline,
    models: FacetModels,
    buffer: VecDeque<HemoSample>,
    skipped: usize,
}

impl WorkloadClassifier {
    pub fn new(models: FacetModels, baseline: FeatureBaseline) -> Result<Self> {
        let spec = models.memory.feature_spec.clone();
        models.check_consistent()?;
        if baseline.mean.len() != spec.dim() {
            return Err(ClassifierError::DimensionMismatch { expected: spec.dim(), got: baseline.mean.len() });
        }
        Ok(Self { buffer: VecDeque::with_capacity(spec.window_len + 1), spec, baseline, models, skipped: 0 })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    /// Ticks skipped because too much of the window was gap-flagged.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Returns a vector once the window is warm; `None` before that or when
    /// the window lacks enough usable samples.
    pub fn push(&mut self, sample: HemoSample) -> Result<Option<WorkloadVector>> {
        self.buffer.push_back(sample);
        if self.buffer.len() > self.spec.window_len {
            self.buffer.pop_front();
        }
        if self.buffer.len() < self.spec.window_len {
            return Ok(None);
        }
        let window = self.buffer.make_contiguous();
        match classify_all(window, &self.spec, &self.baseline, &self.models) {
            Ok(v) => Ok(Some(v)),
            Err(ClassifierError::InsufficientQuality { .. }) => {
                self.skipped += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}
