//! Synthetic fNIRS source.
//!
//! Channels 0-5 follow memory, 6-11 attention and 12-17 perception (for
//! other channel counts the channels are split into three equal-as-possible
//! runs). Each channel's concentration change relaxes toward the target of
//! its facet's state with a first-order lag:
//!
//! | state     | HbO (µM) | HbR (µM) |
//! |-----------|----------|----------|
//! | rest      | 0        | 0        |
//! | underload | -1.0     | +0.3     |
//! | optimal   | +1.0     | -0.3     |
//! | overload  | +3.0     | -0.9     |
//!
//! White noise is added to the concentrations, which are then mapped
//! through the forward Beer-Lambert model to intensities
//! `I = I0 * 10^(-OD)`, with a little multiplicative intensity noise and
//! the scripted motion spikes on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LoadScript, Result, SimError};
use crate::classifier::WorkloadState;
use crate::signal::{ExtinctionModel, PipelineConfig, RawFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// HbO targets for underload, optimal, overload; HbR is `hbr_ratio` times these.
    pub hbo_um: [f64; 3],
    pub hbr_ratio: f64,
    pub tau_s: f64,
    pub intensity_noise_rel: f64,
    pub base_intensity: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { hbo_um: [-1.0, 1.0, 3.0], hbr_ratio: -0.3, tau_s: 3.0, intensity_noise_rel: 1e-4, base_intensity: 1000.0 }
    }
}

impl GeneratorConfig {
    pub fn target(&self, state: Option<WorkloadState>) -> [f64; 2] {
        match state {
            None => [0.0, 0.0],
            Some(s) => {
                let hbo = self.hbo_um[s.index()];
                [hbo, self.hbr_ratio * hbo]
            }
        }
    }
}

/// Facet index (memory 0, attention 1, perception 2) driving `channel`.
pub fn facet_of_channel(channel: usize, channels: usize) -> usize {
    (channel * 3 / channels.max(1)).min(2)
}

pub struct FnirsGenerator {
    cfg: GeneratorConfig,
    channels: usize,
    period_s: f64,
    model: ExtinctionModel,
    i0: Vec<[f64; 2]>,
    conc: Vec<[f64; 2]>,
    rng: ChaCha8Rng,
    noise_um: f64,
    artifact_p: f64,
    artifact_depth: f64,
    artifact_len: usize,
    /// (facet group, frames left)
    spike: Option<(usize, usize)>,
}

impl FnirsGenerator {
    pub fn new(pipeline: &PipelineConfig, cfg: GeneratorConfig, script: &LoadScript, seed: u64) -> Result<Self> {
        let model = ExtinctionModel::from_config(pipeline).map_err(SimError::Pipeline)?;
        let channels = pipeline.channel_count;
        let i0 = (0..channels)
            .map(|c| {
                let k = 1.0 + 0.02 * c as f64;
                [cfg.base_intensity * k, cfg.base_intensity * 1.3 * k]
            })
            .collect();
        let period_s = 1.0 / pipeline.sample_rate_hz;
        Ok(Self {
            channels,
            period_s,
            model,
            i0,
            conc: vec![[0.0; 2]; channels],
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise_um: script.noise_um,
            artifact_p: script.artifacts.rate_per_min / 60.0 * period_s,
            artifact_depth: script.artifacts.depth,
            artifact_len: script.artifacts.duration_frames,
            spike: None,
            cfg,
        })
    }

    /// Next frame. `states` is `None` at rest (calibration).
    pub fn frame(&mut self, timestamp_ns: i64, states: Option<[WorkloadState; 3]>) -> RawFrame {
        let alpha = 1.0 - (-self.period_s / self.cfg.tau_s).exp();
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        if self.spike.is_none() && self.artifact_p > 0.0 && self.rng.random::<f64>() < self.artifact_p {
            self.spike = Some((self.rng.random_range(0..3), self.artifact_len));
        }
        let mut intensities = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let f = facet_of_channel(c, self.channels);
            let target = self.cfg.target(states.map(|s| s[f]));
            for (k, t) in target.iter().enumerate() {
                self.conc[c][k] += alpha * (t - self.conc[c][k]);
            }
            let observed = [
                self.conc[c][0] + self.noise_um * noise.sample(&mut self.rng),
                self.conc[c][1] + self.noise_um * noise.sample(&mut self.rng),
            ];
            let od = self.model.forward(observed);
            let dip = match self.spike {
                Some((g, _)) if g == f => 1.0 - self.artifact_depth,
                _ => 1.0,
            };
            let mut pair = [0.0; 2];
            for w in 0..2 {
                let jitter = 1.0 + self.cfg.intensity_noise_rel * noise.sample(&mut self.rng);
                pair[w] = self.i0[c][w] * 10f64.powf(-od[w]) * jitter * dip;
            }
            intensities.push(pair);
        }
        if let Some((g, left)) = self.spike {
            self.spike = (left > 1).then_some((g, left - 1));
        }
        RawFrame::new(timestamp_ns, intensities)
    }
}

/// Open-loop stream: `rest_s` seconds at rest, then `task_s` seconds
/// following the script with no step tags.
pub fn generate_fnirs(
    script: &LoadScript,
    pipeline: &PipelineConfig,
    cfg: &GeneratorConfig,
    seed: u64,
    rest_s: f64,
    task_s: f64,
) -> Result<Vec<RawFrame>> {
    script.validate()?;
    let mut g = FnirsGenerator::new(pipeline, cfg.clone(), script, seed)?;
    let period = pipeline.sample_period_ns();
    let rest_n = (rest_s * pipeline.sample_rate_hz).round() as i64;
    let task_n = (task_s * pipeline.sample_rate_hz).round() as i64;
    Ok((0..rest_n + task_n)
        .map(|k| {
            let t = k * period;
            let states = (k >= rest_n).then(|| script.states_at((k - rest_n) as f64 / pipeline.sample_rate_hz, &[]));
            g.frame(t, states)
        })
        .collect())
}
