use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PipelineError, RawFrame, Result};

/// Per-channel, per-wavelength intensity statistics over the calibration
/// segment. Variance is the population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub mean: Vec<[f64; 2]>,
    pub variance: Vec<[f64; 2]>,
    pub frame_count: usize,
}

impl BaselineStats {
    pub fn channel_count(&self) -> usize {
        self.mean.len()
    }
}

pub fn calibrate_baseline(frames: &[RawFrame], cfg: &PipelineConfig) -> Result<BaselineStats> {
    let min = cfg.window_len();
    if frames.len() < min {
        return Err(PipelineError::SegmentTooShort { len: frames.len(), min });
    }
    let channels = cfg.channel_count;
    let n = frames.len() as f64;
    let mut mean = vec![[0.0; 2]; channels];
    for f in frames {
        if f.channel_count() != channels {
            return Err(PipelineError::ChannelMismatch { expected: channels, got: f.channel_count() });
        }
        for (m, i) in mean.iter_mut().zip(&f.intensities) {
            m[0] += i[0];
            m[1] += i[1];
        }
    }
    for m in mean.iter_mut() {
        m[0] /= n;
        m[1] /= n;
        for v in m.iter() {
            if !(*v > 0.0) {
                return Err(PipelineError::NonPositiveIntensity(*v));
            }
        }
    }
    let mut variance = vec![[0.0; 2]; channels];
    for f in frames {
        for ((v, m), i) in variance.iter_mut().zip(&mean).zip(&f.intensities) {
            v[0] += (i[0] - m[0]).powi(2);
            v[1] += (i[1] - m[1]).powi(2);
        }
    }
    for v in variance.iter_mut() {
        v[0] /= n;
        v[1] /= n;
    }
    Ok(BaselineStats { mean, variance, frame_count: frames.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(channels: usize) -> PipelineConfig {
        PipelineConfig { channel_count: channels, ..Default::default() }
    }

    fn frames_from(values: impl Fn(usize, usize, usize) -> f64, n: usize, channels: usize) -> Vec<RawFrame> {
        (0..n)
            .map(|t| {
                RawFrame::new(
                    t as i64 * 100_000_000,
                    (0..channels).map(|c| [values(t, c, 0), values(t, c, 1)]).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn constant_segment() {
        let f = frames_from(|_, _, _| 512.0, 100, 3);
        let b = calibrate_baseline(&f, &cfg(3)).unwrap();
        assert!(b.mean.iter().flatten().all(|m| *m == 512.0));
        assert!(b.variance.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn alternating_segment() {
        let f = frames_from(|t, _, _| if t % 2 == 0 { 100.0 } else { 300.0 }, 120, 2);
        let b = calibrate_baseline(&f, &cfg(2)).unwrap();
        assert!(b.mean.iter().flatten().all(|m| *m == 200.0));
        assert!(b.variance.iter().flatten().all(|v| (*v - 10_000.0).abs() < 1e-9));
    }

    #[test]
    fn random_segment_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 250;
        let data: Vec<f64> = (0..n * 4 * 2).map(|_| rng.random_range(50.0..2000.0)).collect();
        let f = frames_from(|t, c, w| data[(t * 4 + c) * 2 + w], n, 4);
        let b = calibrate_baseline(&f, &cfg(4)).unwrap();
        for c in 0..4 {
            for w in 0..2 {
                let xs: Vec<f64> = (0..n).map(|t| data[(t * 4 + c) * 2 + w]).collect();
                // Welford as an independent route
                let (mut m, mut s) = (0.0, 0.0);
                for (k, x) in xs.iter().enumerate() {
                    let d = x - m;
                    m += d / (k + 1) as f64;
                    s += d * (x - m);
                }
                assert!((b.mean[c][w] - m).abs() <= 1e-12 * m.abs().max(1.0));
                assert!((b.variance[c][w] - s / n as f64).abs() <= 1e-12 * (s / n as f64).max(1.0));
            }
        }
    }

    #[test]
    fn short_segment_is_rejected() {
        let f = frames_from(|_, _, _| 1.0, 99, 1);
        assert_eq!(calibrate_baseline(&f, &cfg(1)), Err(PipelineError::SegmentTooShort { len: 99, min: 100 }));
    }
}
