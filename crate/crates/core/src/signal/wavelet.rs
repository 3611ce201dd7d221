//! Periodized orthogonal discrete wavelet transform and the threshold based
//! motion-artifact correction built on it.
//!
//! Coefficient convention matches the common "periodization" mode: for a
//! filter of length `L`, `a[i] = sum_k lo[k] * x[(2i + L/2 - k) mod N]`, and an
//! odd-length input is extended by repeating its last sample before the level
//! is transformed. Reconstruction is the exact transpose and is truncated back
//! to the original length, so `reconstruct(decompose(x)) == x` to rounding.

use super::{PipelineConfig, PipelineError, Result, ThresholdMode, WaveletName};

/// Daubechies 5 decomposition low-pass filter.
const DB5_LO: [f64; 10] = [
    0.0033357252854737712,
    -0.012580751999081999,
    -0.006241490212798274,
    0.07757149384004572,
    -0.032244869584638375,
    -0.24229488706638203,
    0.13842814590132074,
    0.7243085284377729,
    0.6038292697971896,
    0.16010239797419293,
];

#[derive(Debug, Clone)]
pub struct Wavelet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Wavelet {
    pub fn new(name: WaveletName) -> Self {
        let lo: Vec<f64> = match name {
            WaveletName::Db5 => DB5_LO.to_vec(),
        };
        let n = lo.len();
        // quadrature mirror: hi[k] = (-1)^(k+1) lo[L-1-k]
        let hi = (0..n)
            .map(|k| if k % 2 == 0 { -lo[n - 1 - k] } else { lo[n - 1 - k] })
            .collect();
        Self { lo, hi }
    }

    pub fn dec_lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn dec_hi(&self) -> &[f64] {
        &self.hi
    }

    /// One analysis level. Returns `(approximation, detail)`, each of length
    /// `ceil(len / 2)`.
    pub fn dwt(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ext;
        let x = if x.len() % 2 == 1 {
            ext = x.to_vec();
            ext.push(*x.last().unwrap());
            &ext[..]
        } else {
            x
        };
        let n = x.len();
        let half = n / 2;
        let offset = self.lo.len() / 2;
        let mut a = vec![0.0; half];
        let mut d = vec![0.0; half];
        for i in 0..half {
            let mut sa = 0.0;
            let mut sd = 0.0;
            for (k, (lo, hi)) in self.lo.iter().zip(&self.hi).enumerate() {
                let idx = (2 * i + offset + n * k - k) % n;
                sa += lo * x[idx];
                sd += hi * x[idx];
            }
            a[i] = sa;
            d[i] = sd;
        }
        (a, d)
    }

    /// Inverse of [`Wavelet::dwt`], truncated to `out_len` samples.
    pub fn idwt(&self, a: &[f64], d: &[f64], out_len: usize) -> Vec<f64> {
        debug_assert_eq!(a.len(), d.len());
        let n = 2 * a.len();
        let offset = self.lo.len() / 2;
        let mut x = vec![0.0; n];
        for i in 0..a.len() {
            for (k, (lo, hi)) in self.lo.iter().zip(&self.hi).enumerate() {
                let idx = (2 * i + offset + n * k - k) % n;
                x[idx] += lo * a[i] + hi * d[i];
            }
        }
        x.truncate(out_len);
        x
    }
}

/// A multi-level decomposition. `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    /// Input length at each level, finest first.
    pub lengths: Vec<usize>,
}

pub fn wavedec(w: &Wavelet, x: &[f64], levels: usize) -> Decomposition {
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut lengths = Vec::with_capacity(levels);
    for _ in 0..levels {
        if approx.len() < 2 {
            break;
        }
        lengths.push(approx.len());
        let (a, d) = w.dwt(&approx);
        details.push(d);
        approx = a;
    }
    Decomposition { approx, details, lengths }
}

pub fn waverec(w: &Wavelet, dec: &Decomposition) -> Vec<f64> {
    let mut approx = dec.approx.clone();
    for (d, &len) in dec.details.iter().zip(&dec.lengths).rev() {
        approx = w.idwt(&approx, d, len);
    }
    approx
}

fn median_abs(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v: Vec<f64> = values.iter().map(|c| c.abs()).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Output of [`wavelet_motion_correct`].
#[derive(Debug, Clone, PartialEq)]
pub struct MotionCorrection {
    pub series: Vec<f64>,
    /// Number of detail coefficients set to zero.
    pub zeroed: usize,
    /// Largest |c| / sigma among zeroed coefficients (0 when none zeroed).
    pub max_outlier_sigma: f64,
}

/// Multi-level db5 decomposition, detail-coefficient thresholding, and
/// reconstruction. Output length equals input length.
pub fn wavelet_motion_correct(series: &[f64], cfg: &PipelineConfig) -> Result<MotionCorrection> {
    let wavelet = Wavelet::new(cfg.wavelet_name);
    correct_with(&wavelet, series, cfg)
}

pub(crate) fn correct_with(wavelet: &Wavelet, series: &[f64], cfg: &PipelineConfig) -> Result<MotionCorrection> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(PipelineError::NonFiniteInput);
    }
    if series.is_empty() {
        return Ok(MotionCorrection { series: Vec::new(), zeroed: 0, max_outlier_sigma: 0.0 });
    }
    let mut dec = wavedec(wavelet, series, cfg.decomposition_levels());
    let scale = series.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut zeroed = 0;
    let mut max_outlier_sigma = 0.0f64;
    for level in dec.details.iter_mut() {
        let sigma = median_abs(level) / 0.6745;
        let cutoff = match cfg.threshold_mode {
            ThresholdMode::Scaled => cfg.wavelet_threshold * sigma,
            ThresholdMode::Absolute => cfg.wavelet_threshold,
        };
        for c in level.iter_mut() {
            if c.abs() > cutoff {
                // ratios on rounding-noise coefficients are meaningless
                if c.abs() > 1e-9 * scale {
                    let ratio = if sigma > 0.0 { c.abs() / sigma } else { f64::INFINITY };
                    max_outlier_sigma = max_outlier_sigma.max(ratio);
                }
                *c = 0.0;
                zeroed += 1;
            }
        }
    }
    let mut out = waverec(wavelet, &dec);
    out.truncate(series.len());
    Ok(MotionCorrection { series: out, zeroed, max_outlier_sigma })
}
