//! Causal Butterworth low-pass as a cascade of second order sections.
//!
//! Designed by the bilinear transform with the cutoff prewarped, so the
//! digital magnitude is `1 / sqrt(1 + (tan(pi f/fs) / tan(pi fc/fs))^(2N))`.
//! Every section is normalized to unity DC gain.

use std::f64::consts::PI;

use super::{PipelineConfig, PipelineError, Result};

/// `y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthLowpass {
    sections: Vec<Biquad>,
}

impl ButterworthLowpass {
    pub fn design(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 || !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "butterworth order {order} cutoff {cutoff_hz} Hz at {sample_rate_hz} Hz"
            )));
        }
        let k = 2.0 * sample_rate_hz;
        let wc = k * (PI * cutoff_hz / sample_rate_hz).tan();
        let n = order as f64;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            // left half-plane analog pole and its conjugate
            let theta = PI * (2.0 * i as f64 + n + 1.0) / (2.0 * n);
            let (re, im) = (wc * theta.cos(), wc * theta.sin());
            // z = (k + s) / (k - s)
            let den = (k - re).powi(2) + im * im;
            let zr = ((k + re) * (k - re) - im * im) / den;
            let zi = ((k + re) * im + im * (k - re)) / den;
            let a1 = -2.0 * zr;
            let a2 = zr * zr + zi * zi;
            let g = (1.0 + a1 + a2) / 4.0;
            sections.push(Biquad { b: [g, 2.0 * g, g], a: [a1, a2] });
        }
        if order % 2 == 1 {
            let z = (k - wc) / (k + wc);
            let g = (1.0 - z) / 2.0;
            sections.push(Biquad { b: [g, g, 0.0], a: [-z, 0.0] });
        }
        Ok(Self { sections })
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        Self::design(cfg.lowpass_order, cfg.lowpass_cutoff_hz, cfg.sample_rate_hz)
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Magnitude of the realized filter at `freq_hz`, evaluated from the
    /// section coefficients.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        self.sections
            .iter()
            .map(|s| {
                let nr = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
                let ni = -(s.b[1] * s1 + s.b[2] * s2);
                let dr = 1.0 + s.a[0] * c1 + s.a[1] * c2;
                let di = -(s.a[0] * s1 + s.a[1] * s2);
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }

    pub fn new_state(&self) -> FilterState {
        FilterState { z: vec![[0.0; 2]; self.sections.len()], primed: false }
    }
}

/// Closed-form magnitude of the bilinear-transformed Butterworth low-pass.
pub fn butterworth_magnitude(order: usize, cutoff_hz: f64, sample_rate_hz: f64, freq_hz: f64) -> f64 {
    let ratio = (PI * freq_hz / sample_rate_hz).tan() / (PI * cutoff_hz / sample_rate_hz).tan();
    1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt()
}

/// Per-series delay line (transposed direct form II per section).
///
/// The first sample primes every section to its steady state for that input,
/// so a constant stream passes through without a start-up transient.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    z: Vec<[f64; 2]>,
    primed: bool,
}

impl FilterState {
    pub fn is_primed(&self) -> bool {
        self.primed
    }

    pub fn step(&mut self, filter: &ButterworthLowpass, x: f64) -> f64 {
        if !self.primed {
            for (z, s) in self.z.iter_mut().zip(&filter.sections) {
                z[1] = (s.b[2] - s.a[1]) * x;
                z[0] = (s.b[1] - s.a[0]) * x + z[1];
            }
            self.primed = true;
        }
        let mut v = x;
        for (z, s) in self.z.iter_mut().zip(&filter.sections) {
            let y = s.b[0] * v + z[0];
            z[0] = s.b[1] * v - s.a[0] * y + z[1];
            z[1] = s.b[2] * v - s.a[1] * y;
            v = y;
        }
        v
    }
}

/// Filter a whole series from a freshly primed state.
pub fn lowpass_filter(series: &[f64], cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let min = 4 * cfg.lowpass_order;
    if series.len() < min {
        return Err(PipelineError::SeriesTooShort { len: series.len(), min });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(PipelineError::NonFiniteInput);
    }
    let filter = ButterworthLowpass::from_config(cfg)?;
    let mut state = filter.new_state();
    Ok(series.iter().map(|&x| state.step(&filter, x)).collect())
}
