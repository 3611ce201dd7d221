//! Fits the per-facet classifiers on labelled windows from the synthetic
//! generator. Each training run has the same rest calibration as a session,
//! followed by fixed-length segments whose facet states are drawn at
//! random. A window is labelled only once its facet state has held long
//! enough for the hemodynamic lag and the low-pass filter to settle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::session::calibrate;
use super::{sub_seed, FnirsGenerator, GeneratorConfig, LoadScript, Result};
use crate::classifier::{
    extract_features, fit_multinomial, FacetModel, FacetModels, FeatureSpec, FeatureVector, FitOptions, FitReport, WorkloadState,
};
use crate::classifier::Facet;
use crate::signal::PipelineConfig;

const STREAM_TRAINING: u64 = 20;

pub const FIXTURE_MODEL_TEXT: [&str; 3] = [
    include_str!("../../fixtures/models/memory.model"),
    include_str!("../../fixtures/models/attention.model"),
    include_str!("../../fixtures/models/perception.model"),
];

/// The bundled models, trained with [`TrainingConfig::default`].
pub fn fixture_models() -> FacetModels {
    let m = FIXTURE_MODEL_TEXT.map(|t| FacetModel::from_text(t).expect("bundled model parses"));
    let [memory, attention, perception] = m;
    let models = FacetModels { memory, attention, perception };
    models.check_consistent().expect("bundled models agree");
    models
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub seed: u64,
    pub runs: usize,
    pub segments_per_run: usize,
    pub segment_s: f64,
    /// Time after a state change before windows are labelled, on top of
    /// the window length.
    pub settle_s: f64,
    /// Keep every n-th eligible window.
    pub stride: usize,
    pub calibration_s: f64,
    pub l2: f64,
    pub pipeline: PipelineConfig,
    pub generator: GeneratorConfig,
    pub script: LoadScript,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            runs: 6,
            segments_per_run: 15,
            segment_s: 30.0,
            settle_s: 8.0,
            stride: 5,
            calibration_s: 30.0,
            l2: 1e-2,
            pipeline: PipelineConfig::default(),
            generator: GeneratorConfig::default(),
            script: LoadScript::preset("task_coupled").expect("preset exists"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub spec: FeatureSpec,
    pub features: Vec<FeatureVector>,
    /// Per window, the state of each facet in facet order.
    pub labels: Vec<[WorkloadState; 3]>,
}

pub fn training_set(cfg: &TrainingConfig) -> Result<TrainingSet> {
    let pc = &cfg.pipeline;
    let spec = FeatureSpec::new(pc.channel_count, pc.window_len(), pc.sample_rate_hz);
    let seg_n = (cfg.segment_s * pc.sample_rate_hz).round() as usize;
    let hold_n = ((cfg.settle_s * pc.sample_rate_hz).round() as usize) + spec.window_len;
    let tick = pc.sample_period_ns();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for run in 0..cfg.runs {
        let seed = sub_seed(cfg.seed, STREAM_TRAINING, run as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut generator = FnirsGenerator::new(pc, cfg.generator.clone(), &cfg.script, seed)?;
        let cal = calibrate(&mut generator, pc, cfg.calibration_s, &spec, |_| Ok(()))?;
        let mut pipeline = cal.pipeline;
        let mut window = cal.hemo;
        let mut t = cal.task_start_ns;
        let mut since = [0usize; 3];
        let mut states = [WorkloadState::Optimal; 3];
        let mut eligible = 0usize;
        for _ in 0..cfg.segments_per_run {
            let next = [0, 1, 2].map(|_| WorkloadState::from_index(rng.random_range(0..3)));
            for f in 0..3 {
                if next[f] != states[f] {
                    since[f] = 0;
                }
            }
            states = next;
            for _ in 0..seg_n {
                let frame = generator.frame(t, Some(states));
                t += tick;
                since.iter_mut().for_each(|s| *s += 1);
                let Some(h) = pipeline.push(frame)? else { continue };
                window.push(h);
                if window.len() > spec.window_len {
                    window.remove(0);
                }
                if window.len() < spec.window_len || since.iter().any(|&s| s < hold_n) {
                    continue;
                }
                eligible += 1;
                if eligible % cfg.stride.max(1) != 0 {
                    continue;
                }
                if let Ok(x) = extract_features(&window, &spec, &cal.features) {
                    features.push(x);
                    labels.push(states);
                }
            }
        }
    }
    Ok(TrainingSet { spec, features, labels })
}

/// Trains the three facet models and reports each fit.
pub fn train_models(cfg: &TrainingConfig) -> Result<(FacetModels, Vec<FitReport>)> {
    let set = training_set(cfg)?;
    let opts = FitOptions { l2: cfg.l2, seed: cfg.seed, ..FitOptions::default() };
    let mut fitted = Vec::new();
    for (i, facet) in Facet::ALL.into_iter().enumerate() {
        let y: Vec<WorkloadState> = set.labels.iter().map(|l| l[i]).collect();
        fitted.push(fit_multinomial(facet, set.spec.clone(), &set.features, &y, &opts)?);
    }
    let mut it = fitted.into_iter();
    let (memory, rm) = it.next().expect("three fits");
    let (attention, ra) = it.next().expect("three fits");
    let (perception, rp) = it.next().expect("three fits");
    Ok((FacetModels { memory, attention, perception }, vec![rm, ra, rp]))
}
