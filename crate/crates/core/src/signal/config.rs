use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletName {
    Db5,
}

/// How `wavelet_threshold` is turned into a per-level cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// cutoff = threshold * (median|c| / 0.6745), per decomposition level
    Scaled,
    /// cutoff = threshold, in signal units
    Absolute,
}

/// All tunables of the preprocessing chain.
///
/// `extinction[w]` holds `[eps_HbO, eps_HbR]` at wavelength `w` in 1/(mM*cm).
/// The defaults are the tabulated molar extinction coefficients at 730 nm and
/// 850 nm, a 2.5 cm source-detector separation and a DPF of 6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sample_rate_hz: f64,
    pub channel_count: usize,
    pub window_seconds: f64,
    pub wavelet_name: WaveletName,
    pub wavelet_threshold: f64,
    pub threshold_mode: ThresholdMode,
    /// Overrides the automatic depth of `floor(log2(window_len)) - 2`, min 3.
    pub wavelet_levels: Option<usize>,
    /// A zeroed coefficient larger than this many robust sigmas marks the
    /// channel as artifact heavy.
    pub artifact_sigma: f64,
    pub lowpass_cutoff_hz: f64,
    pub lowpass_order: usize,
    pub wavelengths_nm: [f64; 2],
    pub extinction: [[f64; 2]; 2],
    pub path_length_cm: f64,
    pub dpf: [f64; 2],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 10.0,
            channel_count: 18,
            window_seconds: 10.0,
            wavelet_name: WaveletName::Db5,
            wavelet_threshold: 0.1,
            threshold_mode: ThresholdMode::Scaled,
            wavelet_levels: None,
            artifact_sigma: 8.0,
            lowpass_cutoff_hz: 0.12,
            lowpass_order: 4,
            wavelengths_nm: [730.0, 850.0],
            extinction: [[0.390, 1.1022], [1.058, 0.69132]],
            path_length_cm: 2.5,
            dpf: [6.0, 6.0],
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("sample_rate_hz must be > 0, got {}", self.sample_rate_hz));
        }
        if self.channel_count == 0 {
            return bad("channel_count must be >= 1".into());
        }
        let samples = self.window_seconds * self.sample_rate_hz;
        if (samples - samples.round()).abs() > 1e-9 || samples.round() < 8.0 {
            return bad(format!("window_seconds * sample_rate_hz must be an integer >= 8, got {samples}"));
        }
        if !(self.wavelet_threshold >= 0.0) {
            return bad("wavelet_threshold must be >= 0".into());
        }
        if let Some(levels) = self.wavelet_levels {
            if levels == 0 {
                return bad("wavelet_levels must be >= 1".into());
            }
        }
        if !(self.lowpass_cutoff_hz > 0.0 && self.lowpass_cutoff_hz < self.sample_rate_hz / 2.0) {
            return bad(format!(
                "lowpass_cutoff_hz must lie in (0, {}), got {}",
                self.sample_rate_hz / 2.0,
                self.lowpass_cutoff_hz
            ));
        }
        if self.lowpass_order == 0 {
            return bad("lowpass_order must be >= 1".into());
        }
        if !(self.path_length_cm > 0.0) || self.dpf.iter().any(|d| !(*d > 0.0)) {
            return bad("path_length_cm and dpf must be positive".into());
        }
        let e = &self.extinction;
        let det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
        if !(det.abs() > 1e-12) {
            return Err(PipelineError::SingularExtinctionMatrix(det));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        (self.window_seconds * self.sample_rate_hz).round() as usize
    }

    pub fn sample_period_ns(&self) -> i64 {
        (1e9 / self.sample_rate_hz).round() as i64
    }

    /// Inter-frame interval above which a gap is flagged (two sample periods).
    pub fn gap_threshold_ns(&self) -> i64 {
        (2e9 / self.sample_rate_hz).round() as i64
    }

    pub fn decomposition_levels(&self) -> usize {
        self.wavelet_levels.unwrap_or_else(|| {
            let n = self.window_len().max(1);
            let log2 = usize::BITS - 1 - n.leading_zeros();
            (log2 as usize).saturating_sub(2).max(3)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_carry_window_of_100() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.window_len(), 100);
        assert_eq!(cfg.decomposition_levels(), 4);
        assert_eq!(cfg.gap_threshold_ns(), 200_000_000);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = PipelineConfig { window_seconds: 0.5, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = PipelineConfig { lowpass_cutoff_hz: 5.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = PipelineConfig { extinction: [[1.0, 2.0], [2.0, 4.0]], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(PipelineError::SingularExtinctionMatrix(_))));
        cfg = PipelineConfig { window_seconds: 1.05, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn shipped_config_file_matches_defaults() {
        let cfg = PipelineConfig::from_toml_str(include_str!("../../fixtures/pipeline.toml")).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }
}
