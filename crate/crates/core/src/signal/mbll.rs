//! Optical density and the modified Beer-Lambert law.

use super::{PipelineConfig, PipelineError, Result};

/// `OD = -log10(I / I_baseline)`; more absorption gives positive OD.
pub fn optical_density(intensity: f64, baseline_mean: f64) -> Result<f64> {
    if !(intensity > 0.0) {
        return Err(PipelineError::NonPositiveIntensity(intensity));
    }
    if !(baseline_mean > 0.0) {
        return Err(PipelineError::NonPositiveIntensity(baseline_mean));
    }
    Ok(-(intensity / baseline_mean).log10())
}

pub fn optical_density_series(series: &[f64], baseline_mean: f64) -> Result<Vec<f64>> {
    series.iter().map(|&i| optical_density(i, baseline_mean)).collect()
}

/// Effective 2x2 system `dOD(w) = sum_j eps[w][j] * L * DPF[w] * dC[j]`,
/// with concentrations in micromolar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionModel {
    forward: [[f64; 2]; 2],
    inverse: [[f64; 2]; 2],
}

impl ExtinctionModel {
    pub fn new(extinction: [[f64; 2]; 2], path_length_cm: f64, dpf: [f64; 2]) -> Result<Self> {
        let e = extinction;
        let det_eps = e[0][0] * e[1][1] - e[0][1] * e[1][0];
        if !(det_eps.abs() > 1e-12) {
            return Err(PipelineError::SingularExtinctionMatrix(det_eps));
        }
        // 1/(mM cm) * cm -> per mM; one micromolar is 1e-3 mM
        let mut m = [[0.0; 2]; 2];
        for w in 0..2 {
            for j in 0..2 {
                m[w][j] = e[w][j] * path_length_cm * dpf[w] * 1e-3;
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(PipelineError::SingularExtinctionMatrix(det));
        }
        let inverse = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        Ok(Self { forward: m, inverse })
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        Self::new(cfg.extinction, cfg.path_length_cm, cfg.dpf)
    }

    /// `(dHbO, dHbR)` in micromolar to `(dOD at w1, dOD at w2)`.
    pub fn forward(&self, conc_um: [f64; 2]) -> [f64; 2] {
        let m = &self.forward;
        [m[0][0] * conc_um[0] + m[0][1] * conc_um[1], m[1][0] * conc_um[0] + m[1][1] * conc_um[1]]
    }

    /// Solve for `(dHbO, dHbR)` in micromolar.
    pub fn invert(&self, od: [f64; 2]) -> [f64; 2] {
        let m = &self.inverse;
        [m[0][0] * od[0] + m[0][1] * od[1], m[1][0] * od[0] + m[1][1] * od[1]]
    }
}
