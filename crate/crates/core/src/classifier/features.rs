use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result};
use crate::signal::HemoSample;

/// Identifier written into model files for the feature layout below.
pub const MEAN_SLOPE_KIND: &str = "mean_slope_hbo_hbr";

/// Layout per channel: `[hbo_mean, hbo_slope, hbr_mean, hbr_slope]`, slopes
/// in µM/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: String,
    pub channel_count: usize,
    pub window_len: usize,
    pub sample_rate_hz: f64,
}

impl FeatureSpec {
    pub fn new(channel_count: usize, window_len: usize, sample_rate_hz: f64) -> Self {
        Self { kind: MEAN_SLOPE_KIND.to_string(), channel_count, window_len, sample_rate_hz }
    }

    pub fn dim(&self) -> usize {
        4 * self.channel_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Z-scoring statistics taken from calibration windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBaseline {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

const MEAN_SCALE_FLOOR: f64 = 0.5;
const SLOPE_SCALE_FLOOR: f64 = 0.1;

impl FeatureBaseline {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Mean and standard deviation of raw features from calibration windows.
    /// Scales are floored so that a quiet calibration does not blow up the
    /// z-scores of later task windows.
    pub fn from_raw(raw: &[FeatureVector]) -> Result<Self> {
        let Some(first) = raw.first() else {
            return Err(ClassifierError::InsufficientQuality { good: 0, total: 0 });
        };
        let dim = first.dim();
        let n = raw.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in raw {
            if x.dim() != dim {
                return Err(ClassifierError::DimensionMismatch { expected: dim, got: x.dim() });
            }
            for (m, v) in mean.iter_mut().zip(&x.values) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for x in raw {
            for ((s, m), v) in scale.iter_mut().zip(&mean).zip(&x.values) {
                *s += (v - m).powi(2) / n;
            }
        }
        for (j, s) in scale.iter_mut().enumerate() {
            let floor = if j % 2 == 0 { MEAN_SCALE_FLOOR } else { SLOPE_SCALE_FLOOR };
            *s = s.sqrt().max(floor);
        }
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, raw: &FeatureVector) -> Result<FeatureVector> {
        if raw.dim() != self.mean.len() {
            return Err(ClassifierError::DimensionMismatch { expected: self.mean.len(), got: raw.dim() });
        }
        let values = raw.values.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect();
        Ok(FeatureVector { values })
    }
}

/// Mean and least-squares slope of `(t, y)` pairs, centred for stability.
fn mean_and_slope(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (ti, yi) in t.iter().zip(y) {
        sty += (ti - tm) * (yi - ym);
        stt += (ti - tm) * (ti - tm);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    (ym, slope)
}

/// Un-normalised features. Gap-flagged samples are left out of every fit.
pub fn extract_raw_features(window: &[HemoSample], spec: &FeatureSpec) -> Result<FeatureVector> {
    let total = window.len();
    let good: Vec<&HemoSample> = window.iter().filter(|s| !s.is_gap()).collect();
    if total == 0 || good.len() < 2 || good.len() * 5 < total * 4 {
        return Err(ClassifierError::InsufficientQuality { good: good.len(), total });
    }
    if let Some(bad) = good.iter().find(|s| s.hbo.len() != spec.channel_count || s.hbr.len() != spec.channel_count) {
        return Err(ClassifierError::DimensionMismatch { expected: spec.channel_count, got: bad.hbo.len() });
    }
    let t0 = good[0].timestamp_ns;
    let t: Vec<f64> = good.iter().map(|s| (s.timestamp_ns - t0) as f64 * 1e-9).collect();
    let mut values = Vec::with_capacity(spec.dim());
    let mut y = vec![0.0; good.len()];
    let getters: [fn(&HemoSample, usize) -> f64; 2] = [|s, c| s.hbo[c], |s, c| s.hbr[c]];
    for c in 0..spec.channel_count {
        for series in getters {
            for (yi, s) in y.iter_mut().zip(&good) {
                *yi = series(s, c);
            }
            let (m, b) = mean_and_slope(&t, &y);
            values.push(m);
            values.push(b);
        }
    }
    Ok(FeatureVector { values })
}

pub fn extract_features(window: &[HemoSample], spec: &FeatureSpec, baseline: &FeatureBaseline) -> Result<FeatureVector> {
    baseline.apply(&extract_raw_features(window, spec)?)
}
